//! Expectation-maximisation for task-parameterised GMMs.
//!
//! Components share their responsibilities across frames: the E-step scores a
//! datapoint against component `i` with the product of its local likelihoods
//! in every frame. Covariances carry a floor `psi = rel_eps * var(channel)`
//! that enters the M-step as `(S_i + (N/K) psi) / N_i`; this is exact MAP-EM
//! for the penalty `-1/2 tr((N/K) psi Sigma^-1)`, so the recorded objective
//! (log-likelihood plus penalty) never decreases.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::{project, Dataset};
use crate::error::{Error, Result};
use crate::gaussian::{symmetrize, Gaussian};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    /// Relative objective improvement below which EM stops.
    pub tol: f64,
    pub max_iters: usize,
    /// Covariance floor relative to each channel's variance.
    pub rel_eps: f64,
    /// Responsibility mass under which a component counts as collapsed.
    pub min_mass: f64,
    pub max_restarts: usize,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            tol: 1e-5,
            max_iters: 200,
            rel_eps: 1e-6,
            min_mass: 1.0,
            max_restarts: 3,
        }
    }
}

/// Priors plus one Gaussian per (frame, component).
#[derive(Debug, Clone, PartialEq)]
pub struct TpGmm {
    priors: Vec<f64>,
    /// `components[j][i]` is component `i` seen from frame `j`.
    components: Vec<Vec<Gaussian>>,
}

impl TpGmm {
    pub fn new(priors: Vec<f64>, components: Vec<Vec<Gaussian>>) -> Result<Self> {
        let k = priors.len();
        if k == 0 || components.is_empty() {
            return Err(Error::invalid("model needs at least one component and one frame"));
        }
        if priors.iter().any(|p| !(*p > 0.0) || !p.is_finite()) {
            return Err(Error::invalid("priors must be positive"));
        }
        let sum: f64 = priors.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("priors sum to {sum}")));
        }
        let d = components[0].first().map_or(0, |g| g.dim());
        for (j, frame) in components.iter().enumerate() {
            if frame.len() != k {
                return Err(Error::dim(format!("frame {j} has {} components, expected {k}", frame.len())));
            }
            if frame.iter().any(|g| g.dim() != d) {
                return Err(Error::dim(format!("frame {j} mixes component dimensions")));
            }
        }
        Ok(TpGmm { priors, components })
    }

    pub fn num_components(&self) -> usize {
        self.priors.len()
    }

    pub fn num_frames(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.components[0][0].dim()
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn component(&self, frame: usize, i: usize) -> &Gaussian {
        &self.components[frame][i]
    }

    pub fn frame_components(&self, frame: usize) -> &[Gaussian] {
        &self.components[frame]
    }
}

#[derive(Debug, Clone)]
pub struct EmFit {
    pub model: TpGmm,
    /// Regularised log-likelihood after initialisation and after every
    /// iteration of the final (post-restart) run.
    pub log_likelihood: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub restarts: usize,
}

struct Params {
    priors: Vec<f64>,
    means: Vec<Vec<DVector<f64>>>,
    covs: Vec<Vec<DMatrix<f64>>>,
}

pub fn fit_em(dataset: &Dataset, k: usize, cfg: &EmConfig) -> Result<EmFit> {
    if k == 0 {
        return Err(Error::invalid("K must be positive"));
    }
    let min_len = dataset.demos().iter().map(|d| d.len()).min().unwrap_or(0);
    if k > min_len {
        return Err(Error::invalid(format!("K = {k} exceeds the shortest demonstration ({min_len} points)")));
    }
    let p = dataset.num_frames();
    // data[j] holds all projected points of frame j, demo after demo
    let data: Vec<Vec<DVector<f64>>> = (0..p)
        .map(|j| {
            let mut rows = Vec::with_capacity(dataset.total_points());
            for demo in dataset.demos() {
                let local = project(demo, j)?;
                rows.extend(local.row_iter().map(|r| r.transpose()));
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    let n = data[0].len();

    let mut rel_eps = cfg.rel_eps;
    let mut restarts = 0;
    loop {
        let floors: Vec<DMatrix<f64>> = data.iter().map(|x| floor_matrix(x, rel_eps)).collect();
        let prior_scale = n as f64 / k as f64;
        let mut params = kbins_init(dataset, &data, k, &floors, prior_scale)?;
        let mut trace = Vec::new();
        let mut converged = false;
        let mut collapsed = false;
        let mut iterations = 0;

        loop {
            let (resp, ll) = e_step(&data, &params)?;
            let objective = ll + penalty(&params, &floors, prior_scale)?;
            if !objective.is_finite() {
                return Err(Error::Numerical("EM objective is not finite".into()));
            }
            if let Some(&prev) = trace.last() {
                if objective - prev < cfg.tol * f64::abs(prev) {
                    trace.push(objective);
                    converged = true;
                    break;
                }
            }
            trace.push(objective);
            if iterations == cfg.max_iters {
                break;
            }
            match m_step(&data, &resp, &floors, prior_scale, cfg.min_mass) {
                Some(next) => params = next,
                None => {
                    collapsed = true;
                    break;
                }
            }
            iterations += 1;
        }

        if collapsed {
            restarts += 1;
            if restarts > cfg.max_restarts {
                return Err(Error::Numerical(format!(
                    "EM component collapsed after {} restarts",
                    cfg.max_restarts
                )));
            }
            log::warn!("EM component collapsed, restarting with a stronger covariance floor");
            rel_eps *= 10.0;
            continue;
        }

        let components = (0..p)
            .map(|j| {
                (0..k)
                    .map(|i| Gaussian::from_parts(params.means[j][i].clone(), params.covs[j][i].clone()))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let model = TpGmm::new(normalize(params.priors), components)?;
        return Ok(EmFit {
            model,
            log_likelihood: trace,
            iterations,
            converged,
            restarts,
        });
    }
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    // absorb rounding so the sum is 1 to the last bit where possible
    let rest: f64 = v[1..].iter().sum();
    v[0] = 1.0 - rest;
    v
}

fn floor_matrix(x: &[DVector<f64>], rel_eps: f64) -> DMatrix<f64> {
    let d = x[0].len();
    let n = x.len() as f64;
    let mean = x.iter().fold(DVector::zeros(d), |acc, r| acc + r) / n;
    let var: Vec<f64> = (0..d)
        .map(|c| x.iter().map(|r| (r[c] - mean[c]).powi(2)).sum::<f64>() / n)
        .collect();
    let max_var = var.iter().copied().fold(0.0, f64::max).max(1.0);
    DMatrix::from_diagonal(&DVector::from_iterator(
        d,
        var.iter().map(|&v| rel_eps * v.max(1e-6 * max_var)),
    ))
}

fn kbins_init(
    dataset: &Dataset,
    data: &[Vec<DVector<f64>>],
    k: usize,
    floors: &[DMatrix<f64>],
    prior_scale: f64,
) -> Result<Params> {
    let n = data[0].len();
    let mut labels = Vec::with_capacity(n);
    for demo in dataset.demos() {
        let t = demo.len();
        labels.extend((0..t).map(|r| r * k / t));
    }
    let mut resp = DMatrix::zeros(n, k);
    for (r, &l) in labels.iter().enumerate() {
        resp[(r, l)] = 1.0;
    }
    m_step(data, &resp, floors, prior_scale, 0.0).ok_or_else(|| Error::Numerical("empty time bin".into()))
}

fn m_step(
    data: &[Vec<DVector<f64>>],
    resp: &DMatrix<f64>,
    floors: &[DMatrix<f64>],
    prior_scale: f64,
    min_mass: f64,
) -> Option<Params> {
    let n = resp.nrows();
    let k = resp.ncols();
    let mass: Vec<f64> = (0..k).map(|i| resp.column(i).sum()).collect();
    if mass.iter().any(|&m| !(m > min_mass) || m <= 0.0) {
        return None;
    }
    let priors = mass.iter().map(|m| m / n as f64).collect();
    let mut means = Vec::with_capacity(data.len());
    let mut covs = Vec::with_capacity(data.len());
    for (x, floor) in data.iter().zip(floors) {
        let d = x[0].len();
        let mut mj = Vec::with_capacity(k);
        let mut cj = Vec::with_capacity(k);
        for i in 0..k {
            let w = resp.column(i);
            let mu = x.iter().zip(w.iter()).fold(DVector::zeros(d), |acc, (r, &wi)| acc + r * wi) / mass[i];
            let mut s = floor * prior_scale;
            for (r, &wi) in x.iter().zip(w.iter()) {
                if wi > 0.0 {
                    let diff = r - &mu;
                    s.ger(wi, &diff, &diff, 1.0);
                }
            }
            cj.push(symmetrize(&(s / mass[i])));
            mj.push(mu);
        }
        means.push(mj);
        covs.push(cj);
    }
    Some(Params { priors, means, covs })
}

fn e_step(data: &[Vec<DVector<f64>>], params: &Params) -> Result<(DMatrix<f64>, f64)> {
    let n = data[0].len();
    let k = params.priors.len();
    let d_total: usize = data.iter().map(|x| x[0].len()).sum();
    let log_2pi = (2.0 * std::f64::consts::PI).ln();

    let mut logp = DMatrix::from_fn(n, k, |_, i| params.priors[i].ln() - 0.5 * d_total as f64 * log_2pi);
    for (j, x) in data.iter().enumerate() {
        for i in 0..k {
            let chol = cholesky(&params.covs[j][i])?;
            let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
            let l = chol.l();
            for (r, row) in x.iter().enumerate() {
                let z = l
                    .solve_lower_triangular(&(row - &params.means[j][i]))
                    .expect("triangular solve on a Cholesky factor");
                logp[(r, i)] -= 0.5 * (z.norm_squared() + logdet);
            }
        }
    }
    let mut ll = 0.0;
    for r in 0..n {
        let mut row = logp.row_mut(r);
        let max = row.max();
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        ll += lse;
        row.apply(|v| *v = (*v - lse).exp());
    }
    Ok((logp, ll))
}

fn penalty(params: &Params, floors: &[DMatrix<f64>], prior_scale: f64) -> Result<f64> {
    let mut total = 0.0;
    for (j, floor) in floors.iter().enumerate() {
        for cov in &params.covs[j] {
            let inv = cholesky(cov)?.inverse();
            total -= 0.5 * prior_scale * (floor * inv).trace();
        }
    }
    Ok(total)
}

fn cholesky(cov: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(cov.clone()).ok_or_else(|| Error::NotPsd("EM covariance lost positive definiteness".into()))
}

use nalgebra::{DMatrix, DVector};

use super::{TaskFrame, TpGmm, Trajectory, TIME};
use crate::error::{Error, Result};
use crate::gaussian::{product, select, select_vec, symmetrize, Gaussian};

/// Below this log-weight every mixture responsibility underflows in linear scale.
const LOG_UNDERFLOW: f64 = -708.0;

/// Component `i` of the global model: the product over frames of the
/// local Gaussians pushed through their frames.
pub fn global_components(model: &TpGmm, frames: &[TaskFrame]) -> Result<Vec<Gaussian>> {
    if frames.len() != model.num_frames() {
        return Err(Error::dim(format!(
            "model has {} frames but {} were supplied",
            model.num_frames(),
            frames.len()
        )));
    }
    (0..model.num_components())
        .map(|i| {
            let moved = frames
                .iter()
                .enumerate()
                .map(|(j, f)| model.component(j, i).transform(f.a(), f.b()))
                .collect::<Result<Vec<_>>>()?;
            product(&moved)
        })
        .collect()
}

/// One mixture component prepared for time-driven regression.
#[derive(Debug, Clone)]
struct Expert {
    log_prior: f64,
    t_mean: f64,
    t_var: f64,
    out_mean: DVector<f64>,
    gain: DVector<f64>,
    cond_cov: DMatrix<f64>,
}

/// A Gaussian mixture conditioned on its time channel.
#[derive(Debug, Clone)]
pub struct Regressor {
    experts: Vec<Expert>,
}

#[derive(Debug, Clone)]
pub struct GmrOutput {
    pub gaussian: Gaussian,
    pub responsibilities: Vec<f64>,
    /// Set when all responsibilities underflowed and a uniform mixture was used.
    pub fallback: bool,
}

impl Regressor {
    pub fn new(components: &[Gaussian], priors: &[f64]) -> Result<Self> {
        if components.is_empty() || components.len() != priors.len() {
            return Err(Error::dim(format!(
                "{} components with {} priors",
                components.len(),
                priors.len()
            )));
        }
        let d = components[0].dim();
        if d < 2 {
            return Err(Error::dim("regression needs a time channel plus outputs"));
        }
        let out: Vec<usize> = (1..d).collect();
        let experts = components
            .iter()
            .zip(priors)
            .map(|(g, &prior)| {
                if g.dim() != d {
                    return Err(Error::dim("mixed component dimensions"));
                }
                let t_var = g.cov()[(TIME, TIME)];
                if !(t_var > 0.0) {
                    return Err(Error::Singular("component has zero time variance".into()));
                }
                let s_ot = select(g.cov(), &out, &[TIME]);
                let gain = s_ot.column(0) / t_var;
                let cond_cov = symmetrize(&(select(g.cov(), &out, &out) - &gain * s_ot.transpose()));
                Ok(Expert {
                    log_prior: prior.ln(),
                    t_mean: g.mean()[TIME],
                    t_var,
                    out_mean: select_vec(g.mean(), &out),
                    gain,
                    cond_cov,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Regressor { experts })
    }

    pub fn predict(&self, t: f64) -> Result<GmrOutput> {
        let log_w: Vec<f64> = self
            .experts
            .iter()
            .map(|e| {
                let z = t - e.t_mean;
                e.log_prior - 0.5 * (z * z / e.t_var + e.t_var.ln() + (2.0 * std::f64::consts::PI).ln())
            })
            .collect();
        let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let k = self.experts.len();
        let (h, fallback) = if max.is_finite() && max > LOG_UNDERFLOW {
            let w: Vec<f64> = log_w.iter().map(|v| (v - max).exp()).collect();
            let s: f64 = w.iter().sum();
            (w.into_iter().map(|v| v / s).collect::<Vec<_>>(), false)
        } else {
            log::warn!("GMR responsibilities underflow at t = {t}; using a uniform mixture");
            (vec![1.0 / k as f64; k], true)
        };

        let cond_means: Vec<DVector<f64>> = self
            .experts
            .iter()
            .map(|e| &e.out_mean + &e.gain * (t - e.t_mean))
            .collect();
        let dim = cond_means[0].len();
        let mean = cond_means
            .iter()
            .zip(&h)
            .fold(DVector::zeros(dim), |acc, (m, &hi)| acc + m * hi);
        let mut cov = DMatrix::zeros(dim, dim);
        for ((e, m), &hi) in self.experts.iter().zip(&cond_means).zip(&h) {
            let diff = m - &mean;
            cov += &e.cond_cov * hi;
            cov.ger(hi, &diff, &diff, 1.0);
        }
        Ok(GmrOutput {
            gaussian: Gaussian::from_parts(mean, cov)?,
            responsibilities: h,
            fallback,
        })
    }
}

/// Moment-matched conditional `p(x | t)` of a time-driven mixture.
pub fn gmr(components: &[Gaussian], priors: &[f64], t: f64) -> Result<GmrOutput> {
    Regressor::new(components, priors)?.predict(t)
}

/// Baseline TP-GMR: fuse the local models once for static frames, then
/// regress every requested time.
pub fn reproduce(model: &TpGmm, frames: &[TaskFrame], times: &[f64]) -> Result<Trajectory> {
    let regressor = Regressor::new(&global_components(model, frames)?, model.priors())?;
    let mut traj = Trajectory {
        times: times.to_vec(),
        means: Vec::with_capacity(times.len()),
        covs: Vec::with_capacity(times.len()),
        fallback_steps: Vec::new(),
    };
    for (n, &t) in times.iter().enumerate() {
        let out = regressor.predict(t)?;
        if out.fallback {
            traj.fallback_steps.push(n);
        }
        let (m, c) = out.gaussian.into_parts();
        traj.means.push(m);
        traj.covs.push(c);
    }
    Ok(traj)
}

/// TP-GMR with frames that change along the trajectory: `frames[n]` are the
/// frames in force at `times[n]`.
pub fn reproduce_per_step(model: &TpGmm, frames: &[Vec<TaskFrame>], times: &[f64]) -> Result<Trajectory> {
    if frames.len() != times.len() {
        return Err(Error::dim("one frame set per time step is required"));
    }
    let mut traj = Trajectory {
        times: times.to_vec(),
        means: Vec::with_capacity(times.len()),
        covs: Vec::with_capacity(times.len()),
        fallback_steps: Vec::new(),
    };
    for (n, (&t, fs)) in times.iter().zip(frames).enumerate() {
        let out = gmr(&global_components(model, fs)?, model.priors(), t)?;
        if out.fallback {
            traj.fallback_steps.push(n);
        }
        let (m, c) = out.gaussian.into_parts();
        traj.means.push(m);
        traj.covs.push(c);
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn single_component_matches_condition() {
        let g = Gaussian::new(dvector![5.0, 1.0, -1.0], dmatrix![4.0, 1.0, 0.5; 1.0, 2.0, 0.3; 0.5, 0.3, 1.0]).unwrap();
        let out = gmr(std::slice::from_ref(&g), &[1.0], 6.5).unwrap();
        let c = g.condition(&[0], &[1, 2], &dvector![6.5]).unwrap();
        assert!((out.gaussian.mean() - c.mean()).amax() < 1e-12);
        assert!((out.gaussian.cov() - c.cov()).amax() < 1e-12);
        assert_eq!(out.responsibilities, vec![1.0]);
    }

    #[test]
    fn saturated_responsibility() {
        let a = Gaussian::new(dvector![0.0, 1.0], dmatrix![1.0, 0.2; 0.2, 1.0]).unwrap();
        let b = Gaussian::new(dvector![100.0, -5.0], dmatrix![1.0, 0.0; 0.0, 1.0]).unwrap();
        let out = gmr(&[a.clone(), b], &[0.5, 0.5], 0.0).unwrap();
        let c = a.condition(&[0], &[1], &dvector![0.0]).unwrap();
        assert!((out.gaussian.mean() - c.mean()).amax() < 1e-6);
        assert!((out.gaussian.cov() - c.cov()).amax() < 1e-6);
        assert!((out.responsibilities.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn underflow_falls_back_to_uniform() {
        let a = Gaussian::new(dvector![0.0, 1.0], dmatrix![1e-4, 0.0; 0.0, 1.0]).unwrap();
        let b = Gaussian::new(dvector![1.0, 3.0], dmatrix![1e-4, 0.0; 0.0, 1.0]).unwrap();
        let out = gmr(&[a, b], &[0.5, 0.5], 1e3).unwrap();
        assert!(out.fallback);
        assert_eq!(out.responsibilities, vec![0.5, 0.5]);
    }

    #[test]
    fn identity_frame_global_components() {
        let g = Gaussian::new(dvector![1.0, 2.0, 3.0], DMatrix::identity(3, 3) * 0.5).unwrap();
        let model = TpGmm::new(vec![1.0], vec![vec![g.clone()]]).unwrap();
        let comps = global_components(&model, &[TaskFrame::identity(3)]).unwrap();
        assert_eq!(comps[0], g);

        let twin = TpGmm::new(vec![1.0], vec![vec![g.clone()], vec![g.clone()]]).unwrap();
        let f = TaskFrame::planar(0.0, 0.0, 0.0);
        let comps = global_components(&twin, &[f.clone(), f]).unwrap();
        assert!((comps[0].mean() - g.mean()).amax() < 1e-12);
        assert!((comps[0].cov() - g.cov() / 2.0).amax() < 1e-12);
        assert!(global_components(&twin, &[TaskFrame::identity(3)]).is_err());
    }
}

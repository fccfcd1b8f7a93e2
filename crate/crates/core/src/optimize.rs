//! Variance-weighted reproduction loss and the one-dimensional search for
//! the relevance exponent `alpha`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::relevance::{default_window, fit_step_gaussians, relevance_profile, reproduce_weighted, StepGaussians};
use crate::tpmodel::{Dataset, TpGmm, Trajectory};

/// How per-step loss weights follow the generated covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightMode {
    /// `sigma ∝ ||Sigma||`: high-variance steps cost more.
    Literal,
    /// `sigma ∝ 1 / ||Sigma||`: low-variance steps cost more.
    #[default]
    Inverse,
}

impl std::str::FromStr for WeightMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal" => Ok(WeightMode::Literal),
            "inverse" => Ok(WeightMode::Inverse),
            other => Err(Error::invalid(format!("unknown loss mode {other:?} (literal|inverse)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossConfig {
    pub weight_mode: WeightMode,
}

/// `sum_m sum_n sigma[m][n] |x_d - x_g|^2`, with `sigma` normalised over the
/// steps of each demonstration.
pub fn weighted_loss(dataset: &Dataset, generated: &[Trajectory], cfg: &LossConfig) -> Result<f64> {
    if generated.len() != dataset.num_demos() {
        return Err(Error::dim(format!(
            "{} generated trajectories for {} demonstrations",
            generated.len(),
            dataset.num_demos()
        )));
    }
    generated
        .iter()
        .zip(dataset.demos())
        .enumerate()
        .map(|(m, (traj, demo))| {
            if traj.len() != demo.len() {
                return Err(Error::dim(format!(
                    "trajectory {m} has {} steps, demonstration has {}",
                    traj.len(),
                    demo.len()
                )));
            }
            let sigma = step_weights(traj, cfg.weight_mode);
            Ok((0..demo.len())
                .map(|n| sigma[n] * (demo.spatial(n) - &traj.means[n]).norm_squared())
                .sum::<f64>())
        })
        .sum()
}

fn step_weights(traj: &Trajectory, mode: WeightMode) -> Vec<f64> {
    let raw: Vec<f64> = traj
        .covs
        .iter()
        .map(|c| {
            let norm = c.norm().max(f64::MIN_POSITIVE);
            match mode {
                WeightMode::Literal => norm,
                WeightMode::Inverse => 1.0 / norm,
            }
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoldenResult {
    pub x: f64,
    pub fx: f64,
    pub evaluations: Vec<(f64, f64)>,
}

/// Inverse golden ratio, `(sqrt(5) - 1) / 2`.
const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for a minimum of `f` on `[lo, hi]`, stopping when
/// the bracket is narrower than `tol`. The returned point is the best one
/// evaluated.
pub fn golden_section<F>(mut f: F, lo: f64, hi: f64, tol: f64, max_iters: usize) -> Result<GoldenResult>
where
    F: FnMut(f64) -> f64,
{
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::invalid(format!("invalid search interval [{lo}, {hi}]")));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let mut evaluations = Vec::new();
    let mut eval = |x: f64| -> Result<f64> {
        let v = f(x);
        if !v.is_finite() {
            return Err(Error::Numerical(format!("objective is {v} at x = {x}")));
        }
        evaluations.push((x, v));
        Ok(v)
    };

    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = eval(c)?;
    let mut fd = eval(d)?;
    let mut iters = 0;
    while b - a >= tol && iters < max_iters {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = eval(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = eval(d)?;
        }
        iters += 1;
    }
    let (x, fx) = best(&evaluations);
    Ok(GoldenResult { x, fx, evaluations })
}

fn best(evals: &[(f64, f64)]) -> (f64, f64) {
    evals
        .iter()
        .copied()
        .fold((f64::NAN, f64::INFINITY), |acc, e| if e.1 < acc.1 { e } else { acc })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaSearchConfig {
    pub bounds: (f64, f64),
    /// Uniform coarse-scan candidates over `bounds`; 0 runs a pure golden
    /// section over the whole interval.
    pub scan_points: usize,
    pub tol: f64,
    pub max_iters: usize,
    /// Smoothing window; `None` picks `default_window(T)`.
    pub window: Option<usize>,
    pub loss: LossConfig,
}

impl Default for AlphaSearchConfig {
    fn default() -> Self {
        AlphaSearchConfig {
            bounds: (-8.0, 8.0),
            scan_points: 33,
            tol: 1e-3,
            max_iters: 100,
            window: None,
            loss: LossConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaSearchResult {
    pub alpha_star: f64,
    pub loss_star: f64,
    /// Every `(alpha, loss)` evaluated, scan first, in evaluation order.
    pub evaluations: Vec<(f64, f64)>,
    pub window: usize,
}

/// Total weighted loss of reproducing every demonstration of `dataset` with
/// its own frames under relevance exponent `alpha`.
pub fn alpha_objective(
    model: &TpGmm,
    dataset: &Dataset,
    sg: &StepGaussians,
    alpha: f64,
    window: usize,
    loss: &LossConfig,
) -> Result<f64> {
    let times = dataset.require_aligned()?;
    let profile = relevance_profile(sg, alpha, window)?;
    let generated = dataset
        .demos()
        .iter()
        .map(|demo| reproduce_weighted(model, &demo.frames, &profile, &times))
        .collect::<Result<Vec<_>>>()?;
    weighted_loss(dataset, &generated, loss)
}

pub fn optimize_alpha(model: &TpGmm, dataset: &Dataset, cfg: &AlphaSearchConfig) -> Result<AlphaSearchResult> {
    let sg = fit_step_gaussians(dataset)?;
    optimize_alpha_with(model, dataset, &sg, cfg)
}

/// Coarse scan over `cfg.bounds`, then golden-section refinement inside the
/// bracket around the best scan point.
pub fn optimize_alpha_with(
    model: &TpGmm,
    dataset: &Dataset,
    sg: &StepGaussians,
    cfg: &AlphaSearchConfig,
) -> Result<AlphaSearchResult> {
    let (lo, hi) = cfg.bounds;
    if !(lo < hi) {
        return Err(Error::invalid(format!("alpha bounds [{lo}, {hi}] are empty")));
    }
    let window = cfg.window.unwrap_or_else(|| default_window(sg.num_steps()));
    let objective = |alpha: f64| alpha_objective(model, dataset, sg, alpha, window, &cfg.loss);

    let mut evaluations = Vec::new();
    let (glo, ghi) = if cfg.scan_points == 0 {
        (lo, hi)
    } else {
        let grid: Vec<f64> = if cfg.scan_points == 1 {
            vec![0.5 * (lo + hi)]
        } else {
            (0..cfg.scan_points)
                .map(|k| lo + (hi - lo) * k as f64 / (cfg.scan_points - 1) as f64)
                .collect()
        };
        let losses: Vec<f64> = grid
            .par_iter()
            .map(|&a| match objective(a) {
                Ok(v) if v.is_finite() => v,
                Ok(_) | Err(_) => f64::INFINITY,
            })
            .collect();
        let ok: Vec<(f64, f64)> = grid.iter().copied().zip(losses).filter(|e| e.1.is_finite()).collect();
        if ok.is_empty() {
            return Err(Error::Numerical("every alpha candidate failed".into()));
        }
        let k_best = grid
            .iter()
            .position(|&a| a == best(&ok).0)
            .expect("best candidate comes from the grid");
        evaluations.extend(ok);
        if grid.len() == 1 {
            (lo, hi)
        } else {
            (grid[k_best.saturating_sub(1)], grid[(k_best + 1).min(grid.len() - 1)])
        }
    };

    let mut failure = None;
    let refined = golden_section(
        |a| match objective(a) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        glo,
        ghi,
        cfg.tol,
        cfg.max_iters,
    );
    match refined {
        Ok(r) => evaluations.extend(r.evaluations),
        Err(e) => {
            let e = failure.unwrap_or(e);
            if evaluations.is_empty() {
                return Err(e);
            }
            log::warn!("alpha refinement failed ({e}); keeping the best scan candidate");
        }
    }
    let (alpha_star, loss_star) = best(&evaluations);
    Ok(AlphaSearchResult {
        alpha_star,
        loss_star,
        evaluations,
        window,
    })
}

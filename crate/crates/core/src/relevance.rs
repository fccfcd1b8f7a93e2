//! Frame relevance weighting (wTP-GMR).
//!
//! A single Gaussian is fitted to the demonstrations at every time step in
//! every frame. The relevance of frame `j` at step `n` is
//!
//! ```text
//! gamma[n][j] = det(S[n][j])^alpha / sum_k det(S[n][k])^alpha
//! ```
//!
//! evaluated as a softmax over `alpha * log det`. `alpha = -1` ranks frames by
//! precision-determinant ratio; `alpha = 0` weights all frames equally. The
//! weights are smoothed along time and then scale each frame's local
//! covariances (`Sigma / gamma`) before the product of Gaussians.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gaussian::{log_det, regularize, Gaussian, Information};
use crate::tpmodel::{global_components, project, Dataset, Regressor, TaskFrame, TpGmm, Trajectory};

/// Smallest weight a frame can receive. Keeps every weight strictly inside
/// `(0, 1)` and bounds the covariance inflation `Sigma / gamma`.
pub const WEIGHT_FLOOR: f64 = 1e-12;

/// Per-step, per-frame Gaussians over the spatial channels.
#[derive(Debug, Clone, PartialEq)]
pub struct StepGaussians {
    /// `steps[n][j]`
    steps: Vec<Vec<Gaussian>>,
    eps: f64,
}

impl StepGaussians {
    pub fn new(steps: Vec<Vec<Gaussian>>, eps: f64) -> Result<Self> {
        let p = steps.first().map_or(0, |s| s.len());
        if p == 0 || steps.iter().any(|s| s.len() != p) {
            return Err(Error::dim("step Gaussians must form a full T x P grid"));
        }
        Ok(StepGaussians { steps, eps })
    }

    pub fn num_steps(&self) -> usize {
        self.steps.len()
    }

    pub fn num_frames(&self) -> usize {
        self.steps[0].len()
    }

    pub fn get(&self, n: usize, j: usize) -> &Gaussian {
        &self.steps[n][j]
    }

    pub fn steps(&self) -> &[Vec<Gaussian>] {
        &self.steps
    }

    /// Regularisation added to every step covariance.
    pub fn eps(&self) -> f64 {
        self.eps
    }
}

/// Relative regularisation for the per-step fits; scaled by the mean
/// spatial variance of the projected data.
pub const STEP_REL_EPS: f64 = 1e-6;

/// Fits `N(mu[n][j], S[n][j])` to the `M` projected points of step `n` in
/// frame `j` (unbiased covariance, time channel dropped).
pub fn fit_step_gaussians(dataset: &Dataset) -> Result<StepGaussians> {
    fit_step_gaussians_with(dataset, STEP_REL_EPS)
}

pub fn fit_step_gaussians_with(dataset: &Dataset, rel_eps: f64) -> Result<StepGaussians> {
    dataset.require_aligned()?;
    let m = dataset.num_demos();
    if m < 2 {
        return Err(Error::invalid("per-step fits need at least two demonstrations"));
    }
    let p = dataset.num_frames();
    let d = dataset.dim() - 1;
    let t = dataset.demos()[0].len();

    // local[j][m] is demo m in frame j, spatial channels only
    let local: Vec<Vec<DMatrix<f64>>> = (0..p)
        .map(|j| {
            dataset
                .demos()
                .iter()
                .map(|demo| Ok(project(demo, j)?.columns(1, d).into_owned()))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mean_var = {
        let mut acc = 0.0;
        let count = (m * t) as f64;
        for frame in &local {
            for c in 0..d {
                let mu = frame.iter().map(|x| x.column(c).sum()).sum::<f64>() / count;
                let ss: f64 = frame
                    .iter()
                    .map(|x| x.column(c).iter().map(|v| (v - mu).powi(2)).sum::<f64>())
                    .sum();
                acc += ss / count;
            }
        }
        acc / (p * d) as f64
    };
    let eps = if mean_var > 0.0 { rel_eps * mean_var } else { rel_eps };

    let steps = (0..t)
        .map(|n| {
            (0..p)
                .map(|j| {
                    let pts: Vec<DVector<f64>> = local[j].iter().map(|x| x.row(n).transpose()).collect();
                    let mu = pts.iter().fold(DVector::zeros(d), |a, x| a + x) / m as f64;
                    let mut cov = DMatrix::zeros(d, d);
                    for x in &pts {
                        let diff = x - &mu;
                        cov.ger(1.0 / (m - 1) as f64, &diff, &diff, 1.0);
                    }
                    Gaussian::from_parts(mu, regularize(&cov, eps))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    StepGaussians::new(steps, eps)
}

/// Per-step frame weights, rows summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceProfile {
    weights: DMatrix<f64>,
    alpha: Option<f64>,
    window: usize,
}

impl RelevanceProfile {
    /// Manual override: user-supplied weights, validated like computed ones.
    pub fn manual(weights: DMatrix<f64>) -> Result<Self> {
        validate_rows(&weights)?;
        Ok(RelevanceProfile {
            weights,
            alpha: None,
            window: 1,
        })
    }

    /// Equal weights `1/P` at every step.
    pub fn uniform(steps: usize, frames: usize) -> Self {
        RelevanceProfile {
            weights: DMatrix::from_element(steps, frames, 1.0 / frames as f64),
            alpha: Some(0.0),
            window: 1,
        }
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn alpha(&self) -> Option<f64> {
        self.alpha
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn num_steps(&self) -> usize {
        self.weights.nrows()
    }

    pub fn num_frames(&self) -> usize {
        self.weights.ncols()
    }

    /// Largest `|gamma_1 - gamma_2|` over steps, for two-frame profiles.
    pub fn max_gap(&self) -> f64 {
        self.weights
            .row_iter()
            .map(|r| (r[0] - r[r.len() - 1]).abs())
            .fold(0.0, f64::max)
    }
}

fn validate_rows(w: &DMatrix<f64>) -> Result<()> {
    for (n, row) in w.row_iter().enumerate() {
        if row.iter().any(|v| !(*v > 0.0 && *v <= 1.0)) {
            return Err(Error::invalid(format!("weights at step {n} must lie in (0, 1]")));
        }
        if (row.sum() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("weights at step {n} sum to {}", row.sum())));
        }
    }
    Ok(())
}

/// Determinant-power frame weights.
pub fn frame_weights(sg: &StepGaussians, alpha: f64) -> Result<RelevanceProfile> {
    if !alpha.is_finite() {
        return Err(Error::invalid("alpha must be finite"));
    }
    let t = sg.num_steps();
    let p = sg.num_frames();
    let mut weights = DMatrix::zeros(t, p);
    for n in 0..t {
        let logs = (0..p)
            .map(|j| {
                let ld = log_det(sg.get(n, j).cov())?;
                if !ld.is_finite() {
                    return Err(Error::Numerical(format!("non-finite determinant at step {n}, frame {j}")));
                }
                Ok(alpha * ld)
            })
            .collect::<Result<Vec<_>>>()?;
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logs.iter().map(|v| (v - max).exp()).collect();
        let s: f64 = w.iter().sum();
        let row: Vec<f64> = w.iter().map(|v| v / s).collect();
        weights.row_mut(n).copy_from_slice(&floor_row(row));
    }
    Ok(RelevanceProfile {
        weights,
        alpha: Some(alpha),
        window: 1,
    })
}

fn floor_row(mut row: Vec<f64>) -> Vec<f64> {
    if row.iter().any(|&v| v < WEIGHT_FLOOR) {
        row.iter_mut().for_each(|v| *v = v.max(WEIGHT_FLOOR));
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    row
}

/// Odd integer nearest `T/20` (ties go up), at least 3, at most `T`.
pub fn default_window(steps: usize) -> usize {
    let mut w = (steps as f64 / 20.0).round() as usize;
    if w % 2 == 0 {
        w += 1;
    }
    let w = w.max(3);
    let cap = if steps % 2 == 1 { steps } else { steps.saturating_sub(1) };
    w.min(cap.max(1))
}

/// Centred moving average of every frame's weight sequence, truncated at the
/// ends, followed by row renormalisation.
pub fn smooth(profile: &RelevanceProfile, window: usize) -> Result<RelevanceProfile> {
    let t = profile.num_steps();
    if window == 0 || window % 2 == 0 {
        return Err(Error::invalid(format!("smoothing window must be odd and positive, got {window}")));
    }
    if window > t {
        return Err(Error::invalid(format!("smoothing window {window} exceeds {t} steps")));
    }
    if window == 1 {
        return Ok(profile.clone());
    }
    let half = window / 2;
    let p = profile.num_frames();
    let w = &profile.weights;
    let mut out = DMatrix::zeros(t, p);
    for n in 0..t {
        let lo = n.saturating_sub(half);
        let hi = (n + half).min(t - 1);
        let count = (hi - lo + 1) as f64;
        for j in 0..p {
            out[(n, j)] = (lo..=hi).map(|k| w[(k, j)]).sum::<f64>() / count;
        }
        let s = out.row(n).sum();
        out.row_mut(n).apply(|v| *v /= s);
    }
    Ok(RelevanceProfile {
        weights: out,
        alpha: profile.alpha,
        window,
    })
}

/// `frame_weights` followed by `smooth`.
pub fn relevance_profile(sg: &StepGaussians, alpha: f64, window: usize) -> Result<RelevanceProfile> {
    smooth(&frame_weights(sg, alpha)?, window)
}

/// wTP-GMR trajectory: at each step the local components are pushed through
/// the frames, their covariances divided by that step's weights, fused, and
/// regressed at `times[n]`.
pub fn reproduce_weighted(
    model: &TpGmm,
    frames: &[TaskFrame],
    profile: &RelevanceProfile,
    times: &[f64],
) -> Result<Trajectory> {
    if profile.num_steps() != times.len() {
        return Err(Error::dim(format!(
            "profile has {} steps for {} times",
            profile.num_steps(),
            times.len()
        )));
    }
    let p = model.num_frames();
    if frames.len() != p || profile.num_frames() != p {
        return Err(Error::dim(format!(
            "model has {p} frames; got {} frames and a {}-frame profile",
            frames.len(),
            profile.num_frames()
        )));
    }
    let k = model.num_components();
    let d = model.dim();

    // info[i][j]: component i of frame j, moved into the task space
    let info = (0..k)
        .map(|i| {
            frames
                .iter()
                .enumerate()
                .map(|(j, f)| model.component(j, i).transform(f.a(), f.b())?.to_information())
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut traj = Trajectory {
        times: times.to_vec(),
        means: Vec::with_capacity(times.len()),
        covs: Vec::with_capacity(times.len()),
        fallback_steps: Vec::new(),
    };
    for (n, &t) in times.iter().enumerate() {
        let gamma: Vec<f64> = profile.weights.row(n).iter().map(|g| g.max(WEIGHT_FLOOR)).collect();
        let fused = info
            .iter()
            .map(|per_frame| {
                let mut acc = Information::zeros(d);
                for (term, &g) in per_frame.iter().zip(&gamma) {
                    acc.add_scaled(term, g);
                }
                acc.to_gaussian()
            })
            .collect::<Result<Vec<_>>>()?;
        let out = Regressor::new(&fused, model.priors())?.predict(t)?;
        if out.fallback {
            traj.fallback_steps.push(n);
        }
        let (m, c) = out.gaussian.into_parts();
        traj.means.push(m);
        traj.covs.push(c);
    }
    Ok(traj)
}

/// Per-component fused Gaussians at a single step under weights `gamma`,
/// built from `transform` and `scale_cov` directly.
pub fn weighted_components(model: &TpGmm, frames: &[TaskFrame], gamma: &[f64]) -> Result<Vec<Gaussian>> {
    if gamma.len() != frames.len() {
        return Err(Error::dim("one weight per frame is required"));
    }
    if gamma.len() == 1 {
        // a lone frame carries no relative weight
        return global_components(model, frames);
    }
    (0..model.num_components())
        .map(|i| {
            let scaled = frames
                .iter()
                .zip(gamma)
                .enumerate()
                .map(|(j, (f, &g))| model.component(j, i).transform(f.a(), f.b())?.scale_cov(g.max(WEIGHT_FLOOR)))
                .collect::<Result<Vec<_>>>()?;
            crate::gaussian::product(&scaled)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tpmodel::{DatasetMeta, Demonstration};
    use nalgebra::dmatrix;

    fn sg_from_dets(dets: &[(f64, f64)]) -> StepGaussians {
        let steps = dets
            .iter()
            .map(|&(a, b)| {
                vec![
                    Gaussian::new(DVector::zeros(1), dmatrix![a]).unwrap(),
                    Gaussian::new(DVector::zeros(1), dmatrix![b]).unwrap(),
                ]
            })
            .collect();
        StepGaussians::new(steps, 0.0).unwrap()
    }

    #[test]
    fn alpha_zero_is_uniform() {
        let sg = sg_from_dets(&[(1.0, 16.0), (3.0, 0.1)]);
        let w = frame_weights(&sg, 0.0).unwrap();
        assert!(w.weights().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn alpha_minus_one_is_precision_ratio() {
        let sg = sg_from_dets(&[(1.0, 16.0)]);
        let w = frame_weights(&sg, -1.0).unwrap();
        assert!((w.weights()[(0, 0)] - 16.0 / 17.0).abs() < 1e-15);
        assert!((w.weights()[(0, 1)] - 1.0 / 17.0).abs() < 1e-15);
    }

    #[test]
    fn common_scale_leaves_weights() {
        let a = frame_weights(&sg_from_dets(&[(1.0, 16.0)]), 2.3).unwrap();
        let b = frame_weights(&sg_from_dets(&[(7.0, 112.0)]), 2.3).unwrap();
        assert!((a.weights() - b.weights()).amax() < 1e-14);
    }

    #[test]
    fn saturated_weights_stay_inside_unit_interval() {
        let w = frame_weights(&sg_from_dets(&[(1e-200, 1e200)]), -8.0).unwrap();
        for &v in w.weights().iter() {
            assert!(v > 0.0 && v < 1.0);
        }
        assert!((w.weights().row(0).sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn smoothing_cases() {
        let sg = sg_from_dets(&(0..20).map(|k| (1.0 + k as f64, 3.0)).collect::<Vec<_>>());
        let raw = frame_weights(&sg, -1.0).unwrap();
        assert_eq!(smooth(&raw, 1).unwrap(), raw);
        assert!(smooth(&raw, 4).is_err());
        assert!(smooth(&raw, 0).is_err());
        assert!(smooth(&raw, 21).is_err());

        let flat = RelevanceProfile::uniform(10, 2);
        let s = smooth(&flat, 5).unwrap();
        assert!((s.weights() - flat.weights()).amax() < 1e-15);
    }

    #[test]
    fn smoothing_step_function() {
        let t = 40;
        let lo = 1e-9;
        let w = DMatrix::from_fn(t, 2, |n, j| {
            let on = if n >= t / 2 { 1.0 - lo } else { lo };
            if j == 0 {
                1.0 - on
            } else {
                on
            }
        });
        let prof = RelevanceProfile::manual(w).unwrap();
        let s = smooth(&prof, 5).unwrap();
        for n in 1..t {
            assert!((s.weights()[(n, 1)] - s.weights()[(n - 1, 1)]).abs() <= 0.2 + 1e-12);
        }
    }

    #[test]
    fn default_window_rule() {
        assert_eq!(default_window(200), 11);
        assert_eq!(default_window(100), 5);
        assert_eq!(default_window(20), 3);
        assert_eq!(default_window(2), 1);
        assert_eq!(default_window(3), 3);
        assert_eq!(default_window(60), 3);
        assert_eq!(default_window(70), 5);
    }

    #[test]
    fn identical_demos_give_eps_identity() {
        let pts = DMatrix::from_fn(5, 3, |r, c| if c == 0 { r as f64 + 1.0 } else { (r * c) as f64 });
        let demo = Demonstration {
            points: pts,
            frames: vec![TaskFrame::identity(3)],
        };
        let ds = Dataset::new(DatasetMeta::default(), vec![demo.clone(), demo.clone(), demo]).unwrap();
        let sg = fit_step_gaussians(&ds).unwrap();
        for n in 0..5 {
            let g = sg.get(n, 0);
            assert!((g.cov() - DMatrix::identity(2, 2) * sg.eps()).amax() < 1e-18);
            assert_eq!(g.mean()[1], 2.0 * n as f64);
        }
    }

    #[test]
    fn unaligned_dataset_rejected() {
        let a = Demonstration {
            points: DMatrix::from_fn(5, 2, |r, c| if c == 0 { r as f64 } else { 0.0 }),
            frames: vec![TaskFrame::identity(2)],
        };
        let b = Demonstration {
            points: DMatrix::from_fn(6, 2, |r, c| if c == 0 { r as f64 } else { 0.0 }),
            frames: vec![TaskFrame::identity(2)],
        };
        let ds = Dataset::new(DatasetMeta::default(), vec![a, b]).unwrap();
        assert!(fit_step_gaussians(&ds).is_err());
    }

    #[test]
    fn manual_profile_validation() {
        assert!(RelevanceProfile::manual(dmatrix![0.5, 0.6]).is_err());
        assert!(RelevanceProfile::manual(dmatrix![0.0, 1.0]).is_err());
        assert!(RelevanceProfile::manual(dmatrix![0.25, 0.75]).is_ok());
    }
}

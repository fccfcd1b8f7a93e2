//! Evaluation protocols: leave-one-out cross-validation, the extrapolation
//! grid sweep with its trajectory metrics, and pick-and-place critical-point
//! errors.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimize::{optimize_alpha_with, AlphaSearchConfig};
use crate::relevance::{fit_step_gaussians, relevance_profile, reproduce_weighted, RelevanceProfile};
use crate::tpmodel::{fit_em, project, reproduce, Dataset, EmConfig, TaskFrame, TpGmm, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Tpgmr,
    Wtpgmr,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Tpgmr => "tpgmr",
            Method::Wtpgmr => "wtpgmr",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tpgmr" => Ok(Method::Tpgmr),
            "wtpgmr" => Ok(Method::Wtpgmr),
            other => Err(Error::invalid(format!("unknown method {other:?} (tpgmr|wtpgmr)"))),
        }
    }
}

/// Sum of Euclidean segment lengths of the trajectory means.
pub fn path_length(traj: &Trajectory) -> f64 {
    traj.means.windows(2).map(|w| (&w[1] - &w[0]).norm()).sum()
}

/// Distance from the first mean to the start frame origin and from the last
/// mean to the goal frame origin (spatial channels).
pub fn endpoint_errors(traj: &Trajectory, start: &TaskFrame, goal: &TaskFrame) -> (f64, f64) {
    let d = traj.spatial_dim();
    let origin = |f: &TaskFrame| f.b().rows(1, d).into_owned();
    let first = traj.means.first().map_or(0.0, |m| (m - origin(start)).norm());
    let last = traj.means.last().map_or(0.0, |m| (m - origin(goal)).norm());
    (first, last)
}

/// Axis-aligned box in some frame's local spatial coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Aabb {
    pub fn contains(&self, x: &DVector<f64>) -> bool {
        x.iter().zip(&self.lo).zip(&self.hi).all(|((v, lo), hi)| *v >= *lo && *v <= *hi)
    }

    fn around(points: &[DVector<f64>], margin: f64) -> Aabb {
        let d = points[0].len();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for p in points {
            for c in 0..d {
                lo[c] = lo[c].min(p[c]);
                hi[c] = hi[c].max(p[c]);
            }
        }
        // pad every side by `margin` times the longest side
        let longest = lo.iter().zip(&hi).map(|(l, h)| h - l).fold(0.0, f64::max);
        let pad = margin * longest;
        Aabb {
            lo: lo.into_iter().map(|v| v - pad).collect(),
            hi: hi.into_iter().map(|v| v + pad).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintBoxes {
    pub start_frame: usize,
    pub goal_frame: usize,
    pub start_box: Aabb,
    pub goal_box: Aabb,
    pub n_pts: usize,
    pub margin: f64,
}

pub const DEFAULT_BOX_POINTS: usize = 10;
pub const DEFAULT_BOX_MARGIN: f64 = 0.05;

/// Boxes around the first `n_pts` points of every demonstration in the start
/// frame and the last `n_pts` in the goal frame.
pub fn fit_constraint_boxes(
    dataset: &Dataset,
    n_pts: usize,
    margin: f64,
    start_frame: usize,
    goal_frame: usize,
) -> Result<ConstraintBoxes> {
    let p = dataset.num_frames();
    if start_frame >= p || goal_frame >= p {
        return Err(Error::invalid(format!("frame index out of range for {p} frames")));
    }
    if n_pts == 0 || dataset.demos().iter().any(|d| d.len() < n_pts) {
        return Err(Error::invalid(format!("cannot take {n_pts} end points from every demonstration")));
    }
    let d = dataset.dim() - 1;
    let mut head = Vec::new();
    let mut tail = Vec::new();
    for demo in dataset.demos() {
        let s = project(demo, start_frame)?;
        let g = project(demo, goal_frame)?;
        let t = demo.len();
        head.extend((0..n_pts).map(|n| DVector::from_iterator(d, s.row(n).iter().skip(1).copied())));
        tail.extend((t - n_pts..t).map(|n| DVector::from_iterator(d, g.row(n).iter().skip(1).copied())));
    }
    Ok(ConstraintBoxes {
        start_frame,
        goal_frame,
        start_box: Aabb::around(&head, margin),
        goal_box: Aabb::around(&tail, margin),
        n_pts,
        margin,
    })
}

/// `|in_start - n_pts| + |in_goal - n_pts|`, counting trajectory points that
/// fall inside each box in that box's frame.
pub fn constraint_error(traj: &Trajectory, start: &TaskFrame, goal: &TaskFrame, boxes: &ConstraintBoxes) -> usize {
    let d = traj.spatial_dim();
    let count = |frame: &TaskFrame, bx: &Aabb| {
        (0..traj.len())
            .filter(|&n| {
                let local = frame.to_local(&traj.state(n));
                bx.contains(&local.rows(1, d).into_owned())
            })
            .count()
    };
    count(start, &boxes.start_box).abs_diff(boxes.n_pts) + count(goal, &boxes.goal_box).abs_diff(boxes.n_pts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajMetrics {
    pub path_length: f64,
    pub start_error: f64,
    pub end_error: f64,
    pub constraint_error: usize,
}

impl TrajMetrics {
    /// Mean of the two end-point distances.
    pub fn task_error(&self) -> f64 {
        0.5 * (self.start_error + self.end_error)
    }
}

pub fn trajectory_metrics(traj: &Trajectory, start: &TaskFrame, goal: &TaskFrame, boxes: &ConstraintBoxes) -> TrajMetrics {
    let (start_error, end_error) = endpoint_errors(traj, start, goal);
    TrajMetrics {
        path_length: path_length(traj),
        start_error,
        end_error,
        constraint_error: constraint_error(traj, start, goal, boxes),
    }
}

/// Sample mean and (n - 1) standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Root-mean-square Euclidean distance between trajectory means and the
/// demonstration's spatial channels.
pub fn rmse(traj: &Trajectory, demo: &crate::tpmodel::Demonstration) -> Result<f64> {
    if traj.len() != demo.len() {
        return Err(Error::dim("trajectory and demonstration lengths differ"));
    }
    let ss: f64 = (0..demo.len()).map(|n| (demo.spatial(n) - &traj.means[n]).norm_squared()).sum();
    Ok((ss / demo.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LooConfig {
    pub em: EmConfig,
    pub alpha: AlphaSearchConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub held_out: usize,
    pub rmse: f64,
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooReport {
    pub method: Method,
    pub k: usize,
    pub rmse_mean: f64,
    pub rmse_std: f64,
    pub folds: Vec<FoldResult>,
}

/// A model trained for one method, ready to generate trajectories.
#[derive(Debug, Clone)]
pub struct Trained {
    pub model: TpGmm,
    pub times: Vec<f64>,
    /// Smoothed relevance profile; `None` for plain TP-GMR.
    pub profile: Option<RelevanceProfile>,
}

impl Trained {
    pub fn fit(dataset: &Dataset, method: Method, k: usize, cfg: &LooConfig) -> Result<Trained> {
        let times = dataset.require_aligned()?;
        let model = fit_em(dataset, k, &cfg.em)?.model;
        let profile = match method {
            Method::Tpgmr => None,
            Method::Wtpgmr => {
                let sg = fit_step_gaussians(dataset)?;
                let found = optimize_alpha_with(&model, dataset, &sg, &cfg.alpha)?;
                Some(relevance_profile(&sg, found.alpha_star, found.window)?)
            }
        };
        Ok(Trained { model, times, profile })
    }

    pub fn method(&self) -> Method {
        if self.profile.is_some() {
            Method::Wtpgmr
        } else {
            Method::Tpgmr
        }
    }

    pub fn generate(&self, frames: &[TaskFrame]) -> Result<Trajectory> {
        match &self.profile {
            None => reproduce(&self.model, frames, &self.times),
            Some(p) => reproduce_weighted(&self.model, frames, p, &self.times),
        }
    }
}

/// Exhaustive leave-one-out: each fold retrains from scratch on the other
/// `M - 1` demonstrations and scores the held-out one.
pub fn loo_cross_validate(dataset: &Dataset, method: Method, k: usize, cfg: &LooConfig) -> Result<LooReport> {
    let m = dataset.num_demos();
    if m < 2 {
        return Err(Error::invalid("leave-one-out needs at least two demonstrations"));
    }
    dataset.require_aligned()?;
    let folds = (0..m)
        .into_par_iter()
        .map(|held| {
            let train = dataset.without(held)?;
            let trained = Trained::fit(&train, method, k, cfg)?;
            let test = &dataset.demos()[held];
            let traj = trained.generate(&test.frames)?;
            Ok(FoldResult {
                held_out: held,
                rmse: rmse(&traj, test)?,
                alpha: trained.profile.as_ref().and_then(|p| p.alpha()),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (rmse_mean, rmse_std) = mean_std(&folds.iter().map(|f| f.rmse).collect::<Vec<_>>());
    Ok(LooReport {
        method,
        k,
        rmse_mean,
        rmse_std,
        folds,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "rule", content = "angle")]
pub enum OrientationRule {
    /// Circular mean of the demonstrations' start-frame rotations.
    DemoMean,
    /// Fixed rotation in radians.
    Fixed(f64),
}

impl OrientationRule {
    pub fn angle(&self, demo_start_frames: &[TaskFrame]) -> Result<f64> {
        match *self {
            OrientationRule::Fixed(a) => Ok(a),
            OrientationRule::DemoMean => {
                let (mut s, mut c) = (0.0, 0.0);
                for f in demo_start_frames {
                    let a = f
                        .planar_angle()
                        .ok_or_else(|| Error::invalid("orientation rule needs planar (t, x, y) frames"))?;
                    s += a.sin();
                    c += a.cos();
                }
                if s == 0.0 && c == 0.0 {
                    return Err(Error::invalid("start-frame rotations have no circular mean"));
                }
                Ok(s.atan2(c))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub cells_per_side: usize,
    pub orientation_rule: OrientationRule,
    pub goal_frame: TaskFrame,
}

impl GridSpec {
    /// Square grid of side `extent` centred on the origin.
    pub fn centered(extent: f64, cells_per_side: usize, orientation_rule: OrientationRule, goal_frame: TaskFrame) -> Self {
        GridSpec {
            x_range: (-extent / 2.0, extent / 2.0),
            y_range: (-extent / 2.0, extent / 2.0),
            cells_per_side,
            orientation_rule,
            goal_frame,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells_per_side == 0 {
            return Err(Error::invalid("grid needs at least one cell per side"));
        }
        let ordered = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo <= hi;
        if !ordered(self.x_range) || !ordered(self.y_range) {
            return Err(Error::invalid("grid ranges must be finite with lo <= hi"));
        }
        if self.goal_frame.dim() != 3 {
            return Err(Error::invalid("grid sweeps need planar (t, x, y) frames"));
        }
        Ok(())
    }

    /// Cell centres in row-major order (y outer, x inner), ends included. A
    /// single cell sits at the middle of the ranges.
    pub fn cells(&self) -> Vec<(f64, f64)> {
        let n = self.cells_per_side;
        let lin = |(lo, hi): (f64, f64), k: usize| {
            if n == 1 {
                0.5 * (lo + hi)
            } else {
                lo + (hi - lo) * k as f64 / (n - 1) as f64
            }
        };
        (0..n)
            .flat_map(|iy| (0..n).map(move |ix| (ix, iy)))
            .map(|(ix, iy)| (lin(self.x_range, ix), lin(self.y_range, iy)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub cell_x: f64,
    pub cell_y: f64,
    pub metrics: Option<TrajMetrics>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    fn of(xs: &[f64]) -> Self {
        let (mean, std) = mean_std(xs);
        Summary { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub cells: usize,
    pub failures: usize,
    pub constraint_error: Summary,
    pub task_error: Summary,
    pub start_error: Summary,
    pub end_error: Summary,
    pub path_length: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub method: Method,
    pub start_angle: f64,
    pub rows: Vec<GridRow>,
    pub summary: GridSummary,
}

/// Generated trajectory metrics for one pair of start/goal frames.
pub fn evaluate_cell(trained: &Trained, start: &TaskFrame, goal: &TaskFrame, boxes: &ConstraintBoxes) -> Result<TrajMetrics> {
    let p = trained.model.num_frames();
    let mut frames = vec![TaskFrame::identity(start.dim()); p];
    frames[boxes.start_frame] = start.clone();
    frames[boxes.goal_frame] = goal.clone();
    let traj = trained.generate(&frames)?;
    Ok(trajectory_metrics(&traj, start, goal, boxes))
}

/// Sweeps the start frame over the grid with the goal frame held fixed.
pub fn grid_eval(
    trained: &Trained,
    demo_start_frames: &[TaskFrame],
    grid: &GridSpec,
    boxes: &ConstraintBoxes,
) -> Result<GridReport> {
    grid.validate()?;
    if trained.model.num_frames() != 2 {
        return Err(Error::invalid("grid sweeps need a start frame and a goal frame"));
    }
    let angle = grid.orientation_rule.angle(demo_start_frames)?;
    let rows: Vec<GridRow> = grid
        .cells()
        .par_iter()
        .map(|&(x, y)| {
            let start = TaskFrame::planar(x, y, angle);
            match evaluate_cell(trained, &start, &grid.goal_frame, boxes) {
                Ok(m) => GridRow {
                    cell_x: x,
                    cell_y: y,
                    metrics: Some(m),
                    failure: None,
                },
                Err(e) => GridRow {
                    cell_x: x,
                    cell_y: y,
                    metrics: None,
                    failure: Some(e.to_string()),
                },
            }
        })
        .collect();
    let ok: Vec<TrajMetrics> = rows.iter().filter_map(|r| r.metrics).collect();
    let col = |f: fn(&TrajMetrics) -> f64| ok.iter().map(f).collect::<Vec<_>>();
    let summary = GridSummary {
        cells: rows.len(),
        failures: rows.len() - ok.len(),
        constraint_error: Summary::of(&col(|m| m.constraint_error as f64)),
        task_error: Summary::of(&col(|m| m.task_error())),
        start_error: Summary::of(&col(|m| m.start_error)),
        end_error: Summary::of(&col(|m| m.end_error)),
        path_length: Summary::of(&col(|m| m.path_length)),
    };
    Ok(GridReport {
        method: trained.method(),
        start_angle: angle,
        rows,
        summary,
    })
}

/// Which channels carry the end-effector position and the hand signal, and
/// which frames anchor the grasp and the place.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalPointSpec {
    /// First position channel in the full state (time is channel 0).
    pub position_start: usize,
    pub position_len: usize,
    pub hand_channel: usize,
    /// Hand signal: 1 is open, 0 is closed.
    pub threshold: f64,
    pub grasp_frame: usize,
    pub place_frame: usize,
}

impl Default for CriticalPointSpec {
    fn default() -> Self {
        CriticalPointSpec {
            position_start: 1,
            position_len: 3,
            hand_channel: 7,
            threshold: 0.5,
            grasp_frame: 0,
            place_frame: 1,
        }
    }
}

/// Hand-close and hand-open steps of a hand signal: the first step below
/// `threshold`, then the first later step back at or above it.
pub fn hand_events(hand: &[f64], threshold: f64) -> (Option<usize>, Option<usize>) {
    let close = hand.iter().position(|&h| h < threshold);
    let open = close.and_then(|c| hand[c..].iter().position(|&h| h >= threshold).map(|k| c + k));
    (close, open)
}

/// Reference critical points averaged over a demonstration set: the start in
/// global coordinates, the grasp in the grasp frame, the place in the place
/// frame.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalReference {
    pub spec: CriticalPointSpec,
    pub start: DVector<f64>,
    pub grasp_local: DVector<f64>,
    pub place_local: DVector<f64>,
}

impl CriticalReference {
    pub fn from_dataset(dataset: &Dataset, spec: CriticalPointSpec) -> Result<Self> {
        let pos = |x: &DVector<f64>| x.rows(spec.position_start, spec.position_len).into_owned();
        let m = dataset.num_demos() as f64;
        let mut start = DVector::zeros(spec.position_len);
        let mut grasp = DVector::zeros(spec.position_len);
        let mut place = DVector::zeros(spec.position_len);
        for (k, demo) in dataset.demos().iter().enumerate() {
            let hand: Vec<f64> = demo.points.column(spec.hand_channel).iter().copied().collect();
            let (close, open) = hand_events(&hand, spec.threshold);
            let (c, o) = close
                .zip(open)
                .ok_or_else(|| Error::invalid(format!("demo {k}: hand never closes and reopens")))?;
            start += pos(&demo.row(0));
            grasp += pos(&demo.frames[spec.grasp_frame].to_local(&demo.row(c)));
            place += pos(&demo.frames[spec.place_frame].to_local(&demo.row(o)));
        }
        Ok(CriticalReference {
            spec,
            start: start / m,
            grasp_local: grasp / m,
            place_local: place / m,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalErrors {
    pub start: f64,
    /// `None` when the generated hand signal never closes.
    pub grasp: Option<f64>,
    /// `None` when the generated hand signal never reopens.
    pub place: Option<f64>,
}

pub fn critical_point_errors(traj: &Trajectory, frames: &[TaskFrame], reference: &CriticalReference) -> CriticalErrors {
    let spec = &reference.spec;
    let pos = |x: &DVector<f64>| x.rows(spec.position_start, spec.position_len).into_owned();
    let hand: Vec<f64> = traj.means.iter().map(|m| m[spec.hand_channel - 1]).collect();
    let (close, open) = hand_events(&hand, spec.threshold);
    let start = if traj.is_empty() {
        f64::NAN
    } else {
        (pos(&traj.state(0)) - &reference.start).norm()
    };
    let grasp = close.map(|c| (pos(&frames[spec.grasp_frame].to_local(&traj.state(c))) - &reference.grasp_local).norm());
    let place = open.map(|o| (pos(&frames[spec.place_frame].to_local(&traj.state(o))) - &reference.place_local).norm());
    CriticalErrors { start, grasp, place }
}

//! Task frames, demonstrations and the baseline TP-GMM / TP-GMR pipeline.

mod em;
mod gmr;

pub use em::{fit_em, EmConfig, EmFit, TpGmm};
pub use gmr::{gmr, global_components, reproduce, reproduce_per_step, GmrOutput, Regressor};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::check_invertible;

/// Column holding the time index in every state vector.
pub const TIME: usize = 0;

/// An affine task frame `{A, b}`. Local coordinates are `A^-1 (x - b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskFrame {
    a: DMatrix<f64>,
    a_inv: DMatrix<f64>,
    b: DVector<f64>,
}

impl TaskFrame {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if !a.is_square() || a.nrows() != b.len() {
            return Err(Error::dim(format!(
                "frame A is {}x{} but b has {} entries",
                a.nrows(),
                a.ncols(),
                b.len()
            )));
        }
        check_invertible(&a)?;
        let a_inv = a.clone().try_inverse().ok_or_else(|| Error::Singular("frame A".into()))?;
        Ok(TaskFrame { a, a_inv, b })
    }

    pub fn identity(dim: usize) -> Self {
        TaskFrame {
            a: DMatrix::identity(dim, dim),
            a_inv: DMatrix::identity(dim, dim),
            b: DVector::zeros(dim),
        }
    }

    /// Embeds a spatial frame into a state with a leading time channel:
    /// `A = diag(1, R)`, `b = (0, p)`.
    pub fn with_time_channel(rot: &DMatrix<f64>, origin: &DVector<f64>) -> Result<Self> {
        let n = rot.nrows() + 1;
        let mut a = DMatrix::zeros(n, n);
        a[(0, 0)] = 1.0;
        a.view_mut((1, 1), (n - 1, n - 1)).copy_from(rot);
        let mut b = DVector::zeros(n);
        b.rows_mut(1, n - 1).copy_from(origin);
        TaskFrame::new(a, b)
    }

    /// Planar frame for `(t, x, y)` states, rotated by `angle` radians.
    pub fn planar(x: f64, y: f64, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        let rot = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        TaskFrame::with_time_channel(&rot, &DVector::from_vec(vec![x, y])).expect("rotations are invertible")
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn to_local(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a_inv * (x - &self.b)
    }

    pub fn to_global(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b
    }

    /// Rotation angle of the spatial block of a planar `(t, x, y)` frame.
    pub fn planar_angle(&self) -> Option<f64> {
        (self.dim() == 3).then(|| self.a[(2, 1)].atan2(self.a[(1, 1)]))
    }

    /// Composes a global rigid motion `x -> R x + v` (acting on the state)
    /// with this frame.
    pub fn moved_by(&self, r: &DMatrix<f64>, v: &DVector<f64>) -> Result<TaskFrame> {
        TaskFrame::new(r * &self.a, r * &self.b + v)
    }

    fn has_time_structure(&self) -> bool {
        let n = self.dim();
        self.a[(0, 0)] == 1.0
            && self.b[0] == 0.0
            && (1..n).all(|k| self.a[(0, k)] == 0.0 && self.a[(k, 0)] == 0.0)
    }
}

/// One demonstration: `T x D` points (column 0 is time) and its static frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Demonstration {
    pub points: DMatrix<f64>,
    pub frames: Vec<TaskFrame>,
}

impl Demonstration {
    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn times(&self) -> Vec<f64> {
        self.points.column(TIME).iter().copied().collect()
    }

    pub fn row(&self, n: usize) -> DVector<f64> {
        self.points.row(n).transpose()
    }

    /// Spatial channels (everything but time) of row `n`.
    pub fn spatial(&self, n: usize) -> DVector<f64> {
        let d = self.points.ncols();
        DVector::from_iterator(d - 1, self.points.row(n).iter().skip(1).copied())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    pub channel_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    demos: Vec<Demonstration>,
}

impl Dataset {
    /// Validates shared dimensions, increasing time columns and the
    /// time-channel structure of every frame.
    pub fn new(meta: DatasetMeta, demos: Vec<Demonstration>) -> Result<Self> {
        let first = demos.first().ok_or_else(|| Error::invalid("dataset has no demonstrations"))?;
        let d = first.points.ncols();
        let p = first.frames.len();
        if d < 2 {
            return Err(Error::dim("states need a time channel and at least one spatial channel"));
        }
        if p == 0 {
            return Err(Error::invalid("demonstrations need at least one task frame"));
        }
        if !meta.channel_names.is_empty() && meta.channel_names.len() != d {
            return Err(Error::dim(format!(
                "{} channel names for {d} channels",
                meta.channel_names.len()
            )));
        }
        for (m, demo) in demos.iter().enumerate() {
            if demo.points.ncols() != d {
                return Err(Error::dim(format!("demo {m} has {} channels, expected {d}", demo.points.ncols())));
            }
            if demo.frames.len() != p {
                return Err(Error::dim(format!("demo {m} has {} frames, expected {p}", demo.frames.len())));
            }
            if demo.points.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("demo {m} has non-finite values")));
            }
            let t = demo.points.column(TIME);
            if t.len() < 1 || t.iter().zip(t.iter().skip(1)).any(|(a, b)| b <= a) {
                return Err(Error::invalid(format!("demo {m}: time column must be strictly increasing")));
            }
            for (j, f) in demo.frames.iter().enumerate() {
                if f.dim() != d {
                    return Err(Error::dim(format!("demo {m} frame {j} has dimension {}", f.dim())));
                }
                if !f.has_time_structure() {
                    return Err(Error::invalid(format!(
                        "demo {m} frame {j}: frames must leave the time channel untouched"
                    )));
                }
            }
        }
        Ok(Dataset { meta, demos })
    }

    pub fn demos(&self) -> &[Demonstration] {
        &self.demos
    }

    pub fn num_demos(&self) -> usize {
        self.demos.len()
    }

    pub fn dim(&self) -> usize {
        self.demos[0].points.ncols()
    }

    pub fn num_frames(&self) -> usize {
        self.demos[0].frames.len()
    }

    pub fn total_points(&self) -> usize {
        self.demos.iter().map(|d| d.len()).sum()
    }

    /// Dataset with demonstration `m` removed.
    pub fn without(&self, m: usize) -> Result<Dataset> {
        let demos = self
            .demos
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != m)
            .map(|(_, d)| d.clone())
            .collect();
        Dataset::new(self.meta.clone(), demos)
    }

    pub fn subset(&self, idx: &[usize]) -> Result<Dataset> {
        Dataset::new(self.meta.clone(), idx.iter().map(|&k| self.demos[k].clone()).collect())
    }

    /// Common time vector if all demonstrations share one.
    pub fn aligned_times(&self) -> Option<Vec<f64>> {
        let t0 = self.demos[0].times();
        self.demos[1..]
            .iter()
            .all(|d| {
                d.len() == t0.len() && d.points.column(TIME).iter().zip(&t0).all(|(a, b)| (a - b).abs() <= 1e-12)
            })
            .then_some(t0)
    }

    pub fn require_aligned(&self) -> Result<Vec<f64>> {
        self.aligned_times()
            .ok_or_else(|| Error::invalid("demonstrations are not aligned to a common time base; resample first"))
    }
}

/// Points of `demo` expressed in frame `j`: rows `A_j^-1 (x_n - b_j)`.
pub fn project(demo: &Demonstration, j: usize) -> Result<DMatrix<f64>> {
    let frame = demo
        .frames
        .get(j)
        .ok_or_else(|| Error::invalid(format!("frame {j} does not exist")))?;
    let centered = DMatrix::from_fn(demo.points.nrows(), demo.points.ncols(), |r, c| {
        demo.points[(r, c)] - frame.b[c]
    });
    Ok(centered * frame.a_inv.transpose())
}

/// Time column convention after resampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeMode {
    /// Integer step index `1..=T`.
    #[default]
    StepIndex,
    /// Uniform samples of `[0, 1]`.
    Normalized,
}

impl TimeMode {
    pub fn times(self, steps: usize) -> Vec<f64> {
        match self {
            TimeMode::StepIndex => (1..=steps).map(|k| k as f64).collect(),
            TimeMode::Normalized => (0..steps).map(|k| k as f64 / (steps - 1) as f64).collect(),
        }
    }
}

/// Linearly interpolates every demonstration onto `steps` uniform samples of
/// its normalised duration and rewrites the time column.
pub fn resample(dataset: &Dataset, steps: usize, mode: TimeMode) -> Result<Dataset> {
    if steps < 2 {
        return Err(Error::invalid(format!("cannot resample to {steps} steps")));
    }
    let times = mode.times(steps);
    let demos = dataset
        .demos
        .iter()
        .enumerate()
        .map(|(m, demo)| {
            if demo.len() < 2 {
                return Err(Error::invalid(format!("demo {m} has fewer than two points")));
            }
            let t = demo.points.column(TIME);
            let (t0, t1) = (t[0], t[t.len() - 1]);
            let d = demo.points.ncols();
            let mut out = DMatrix::zeros(steps, d);
            let mut seg = 0;
            for k in 0..steps {
                let target = t0 + (t1 - t0) * k as f64 / (steps - 1) as f64;
                while seg + 2 < t.len() && t[seg + 1] < target {
                    seg += 1;
                }
                let (ta, tb) = (t[seg], t[seg + 1]);
                let w = ((target - ta) / (tb - ta)).clamp(0.0, 1.0);
                for c in 1..d {
                    let (a, b) = (demo.points[(seg, c)], demo.points[(seg + 1, c)]);
                    out[(k, c)] = a + w * (b - a);
                }
                out[(k, TIME)] = times[k];
            }
            Ok(Demonstration {
                points: out,
                frames: demo.frames.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(dataset.meta.clone(), demos)
}

/// Generated trajectory: output means and covariances over the spatial
/// channels at each requested time.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub means: Vec<DVector<f64>>,
    pub covs: Vec<DMatrix<f64>>,
    /// Steps at which every GMR responsibility underflowed and a uniform
    /// mixture was used instead.
    pub fallback_steps: Vec<usize>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn spatial_dim(&self) -> usize {
        self.means.first().map_or(0, |m| m.len())
    }

    /// Full state `(t, mean)` at step `n`.
    pub fn state(&self, n: usize) -> DVector<f64> {
        let mut s = DVector::zeros(self.spatial_dim() + 1);
        s[TIME] = self.times[n];
        s.rows_mut(1, self.spatial_dim()).copy_from(&self.means[n]);
        s
    }
}

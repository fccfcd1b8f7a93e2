//! Seeded synthetic demonstrations.
//!
//! Reaching: planar `(t, x, y)` paths that leave the start pose straight
//! along its heading, swing across, and drop vertically onto the goal.
//! Pick-and-place: `(t, x, y, z, rx, ry, rz, hand)` paths that grasp an
//! object on a tray and drop it at a fixed disposal point.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tpmodel::{Dataset, DatasetMeta, Demonstration, TaskFrame};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReachingSpec {
    pub goal: (f64, f64),
    /// Goal frame orientation (radians).
    pub goal_angle: f64,
    /// Start-to-goal distance and its uniform jitter.
    pub distance: f64,
    pub distance_jitter: f64,
    /// Direction (radians) of the start seen from the goal.
    pub bearing: (f64, f64),
    /// Start heading (radians) relative to the direction from the start
    /// towards the goal; the path leaves along it.
    pub heading: (f64, f64),
    pub exit_length: f64,
    pub descent_length: f64,
    /// Fractions of the duration spent on the straight exit and the descent.
    pub exit_fraction: f64,
    pub descent_fraction: f64,
    pub noise: f64,
}

impl Default for ReachingSpec {
    fn default() -> Self {
        ReachingSpec {
            goal: (-0.8, -0.8),
            goal_angle: 0.0,
            distance: 1.5,
            distance_jitter: 0.1,
            bearing: (30f64.to_radians(), 60f64.to_radians()),
            heading: (-20f64.to_radians(), 20f64.to_radians()),
            exit_length: 0.5,
            descent_length: 0.5,
            exit_fraction: 0.4,
            descent_fraction: 0.4,
            noise: 0.001,
        }
    }
}

impl ReachingSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.exit_fraction > 0.0
            && self.descent_fraction > 0.0
            && self.exit_fraction + self.descent_fraction < 1.0
            && self.exit_length > 0.0
            && self.descent_length > 0.0
            && self.distance > self.distance_jitter
            && self.noise >= 0.0
            && self.noise.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("inconsistent reaching generator settings"))
        }
    }

    /// Noise-free position at normalised time `s` in `[0, 1]`.
    pub fn path(&self, start: (f64, f64), heading: f64, s: f64) -> (f64, f64) {
        let (hs, hc) = heading.sin_cos();
        let (g0, g1) = self.goal;
        let (fe, fd) = (self.exit_fraction, self.descent_fraction);
        let fm = 1.0 - fe - fd;
        let p1 = (start.0 + self.exit_length * hc, start.1 + self.exit_length * hs);
        let p2 = (g0, g1 + self.descent_length);
        if s <= fe {
            let u = s / fe;
            (start.0 + u * (p1.0 - start.0), start.1 + u * (p1.1 - start.1))
        } else if s >= 1.0 - fd {
            let u = (s - 1.0 + fd) / fd;
            (p2.0, p2.1 - u * self.descent_length)
        } else {
            // cubic Hermite with the velocities of the two straight phases
            let u = (s - fe) / fm;
            let v1 = (self.exit_length / fe * hc * fm, self.exit_length / fe * hs * fm);
            let v2 = (0.0, -self.descent_length / fd * fm);
            let (u2, u3) = (u * u, u * u * u);
            let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
            let h10 = u3 - 2.0 * u2 + u;
            let h01 = -2.0 * u3 + 3.0 * u2;
            let h11 = u3 - u2;
            (
                h00 * p1.0 + h10 * v1.0 + h01 * p2.0 + h11 * v2.0,
                h00 * p1.1 + h10 * v1.1 + h01 * p2.1 + h11 * v2.1,
            )
        }
    }

    pub fn goal_frame(&self) -> TaskFrame {
        TaskFrame::planar(self.goal.0, self.goal.1, self.goal_angle)
    }

    pub fn generate(&self, m: usize, t: usize, seed: u64) -> Result<Dataset> {
        self.validate()?;
        if m < 2 || t < 20 {
            return Err(Error::invalid("need at least two demonstrations of 20 or more steps"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, self.noise).map_err(|e| Error::invalid(e.to_string()))?;
        let goal = self.goal_frame();
        let demos = (0..m)
            .map(|_| {
                let dist = self.distance + rng.random_range(-1.0..=1.0) * self.distance_jitter;
                let bearing = rng.random_range(self.bearing.0..=self.bearing.1);
                // leave roughly towards the goal
                let heading = bearing + PI + rng.random_range(self.heading.0..=self.heading.1);
                let start = (self.goal.0 + dist * bearing.cos(), self.goal.1 + dist * bearing.sin());
                let mut points = DMatrix::zeros(t, 3);
                for n in 0..t {
                    let (x, y) = self.path(start, heading, n as f64 / (t - 1) as f64);
                    points[(n, 0)] = (n + 1) as f64;
                    points[(n, 1)] = x + noise.sample(&mut rng);
                    points[(n, 2)] = y + noise.sample(&mut rng);
                }
                Demonstration {
                    points,
                    frames: vec![TaskFrame::planar(start.0, start.1, heading), goal.clone()],
                }
            })
            .collect();
        Dataset::new(
            DatasetMeta {
                name: "reaching".into(),
                channel_names: vec!["t".into(), "x".into(), "y".into()],
            },
            demos,
        )
    }
}

/// `M` seeded reaching demonstrations of `T` steps each.
pub fn gen_reaching(m: usize, t: usize, seed: u64, noise: f64) -> Result<Dataset> {
    ReachingSpec {
        noise,
        ..ReachingSpec::default()
    }
    .generate(m, t, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetLayout {
    /// Targets drawn uniformly from every tray cell.
    #[default]
    Uniform,
    /// Alternate demonstrations between the first and last few rows.
    Clustered,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraySpec {
    /// Position of cell `(0, 0)`.
    pub origin: [f64; 3],
    pub rows: usize,
    pub cols: usize,
    pub pitch: f64,
    pub home: [f64; 3],
    pub home_jitter: f64,
    pub disposal: [f64; 3],
    pub approach_height: f64,
    pub grasp_height: f64,
    pub place_height: f64,
    pub layout: TargetLayout,
    pub noise: f64,
}

impl Default for TraySpec {
    fn default() -> Self {
        TraySpec {
            origin: [0.45, -0.225, 0.0],
            rows: 10,
            cols: 10,
            pitch: 0.05,
            home: [0.3, 0.0, 0.35],
            home_jitter: 0.02,
            disposal: [0.1, 0.5, 0.05],
            approach_height: 0.12,
            grasp_height: 0.01,
            place_height: 0.03,
            layout: TargetLayout::Uniform,
            noise: 0.001,
        }
    }
}

/// Gripper orientation (axis-angle) pointing down.
const DOWN: [f64; 3] = [PI, 0.0, 0.0];

impl TraySpec {
    pub fn cell(&self, r: usize, c: usize) -> [f64; 3] {
        [
            self.origin[0] + r as f64 * self.pitch,
            self.origin[1] + c as f64 * self.pitch,
            self.origin[2],
        ]
    }

    /// Every cell, row-major.
    pub fn cells(&self) -> Vec<[f64; 3]> {
        (0..self.rows)
            .flat_map(|r| (0..self.cols).map(move |c| (r, c)))
            .map(|(r, c)| self.cell(r, c))
            .collect()
    }

    /// Grasp frame at `target` and the place frame at the disposal point.
    pub fn frames_for(&self, target: [f64; 3]) -> Vec<TaskFrame> {
        let rot = DMatrix::identity(7, 7);
        let at = |p: [f64; 3]| {
            let mut o = DVector::zeros(7);
            o.rows_mut(0, 3).copy_from_slice(&p);
            TaskFrame::with_time_channel(&rot, &o).expect("identity is invertible")
        };
        vec![at(target), at(self.disposal)]
    }

    /// Noise-free `(position, hand)` at normalised time `s`.
    pub fn path(&self, home: [f64; 3], target: [f64; 3], s: f64) -> ([f64; 3], f64) {
        let lift = |p: [f64; 3], h: f64| [p[0], p[1], p[2] + h];
        let above = lift(target, self.approach_height);
        let grasp = lift(target, self.grasp_height);
        let drop_above = lift(self.disposal, self.approach_height);
        let place = lift(self.disposal, self.place_height);
        let keys: [(f64, [f64; 3]); 9] = [
            (0.00, home),
            (0.25, above),
            (0.40, grasp),
            (0.45, grasp),
            (0.55, above),
            (0.80, drop_above),
            (0.90, place),
            (0.95, place),
            (1.00, place),
        ];
        let mut pos = place;
        for w in keys.windows(2) {
            let ((s0, p0), (s1, p1)) = (w[0], w[1]);
            if s <= s1 {
                let u = smoothstep(((s - s0) / (s1 - s0)).clamp(0.0, 1.0));
                pos = [0, 1, 2].map(|k| p0[k] + u * (p1[k] - p0[k]));
                break;
            }
        }
        let hand = if s < 0.40 {
            1.0
        } else if s < 0.45 {
            1.0 - smoothstep((s - 0.40) / 0.05)
        } else if s < 0.90 {
            0.0
        } else if s < 0.95 {
            smoothstep((s - 0.90) / 0.05)
        } else {
            1.0
        };
        (pos, hand)
    }

    fn validate(&self) -> Result<()> {
        let ok = self.rows > 0
            && self.cols > 0
            && self.pitch > 0.0
            && self.noise >= 0.0
            && self.noise.is_finite()
            && self.home_jitter >= 0.0
            && self.approach_height > self.grasp_height;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("inconsistent tray settings"))
        }
    }
}

fn smoothstep(u: f64) -> f64 {
    u * u * (3.0 - 2.0 * u)
}

/// `M` seeded pick-and-place demonstrations of `T` steps each.
pub fn gen_pickplace(m: usize, t: usize, seed: u64, tray: &TraySpec) -> Result<Dataset> {
    tray.validate()?;
    if m == 0 || t < 2 {
        return Err(Error::invalid("need at least one demonstration of two or more steps"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, tray.noise).map_err(|e| Error::invalid(e.to_string()))?;
    let demos = (0..m)
        .map(|k| {
            let row = match tray.layout {
                TargetLayout::Uniform => rng.random_range(0..tray.rows),
                TargetLayout::Clustered => {
                    let band = (tray.rows / 3).max(1);
                    let r = rng.random_range(0..band);
                    if k % 2 == 0 {
                        r
                    } else {
                        tray.rows - 1 - r
                    }
                }
            };
            let col = rng.random_range(0..tray.cols);
            let target = tray.cell(row, col);
            let home = tray.home.map(|h| h + rng.random_range(-1.0..=1.0) * tray.home_jitter);
            let mut points = DMatrix::zeros(t, 8);
            for n in 0..t {
                let (pos, hand) = tray.path(home, target, n as f64 / (t - 1) as f64);
                points[(n, 0)] = (n + 1) as f64;
                for c in 0..3 {
                    points[(n, 1 + c)] = pos[c] + noise.sample(&mut rng);
                    points[(n, 4 + c)] = DOWN[c] + noise.sample(&mut rng);
                }
                points[(n, 7)] = hand + noise.sample(&mut rng);
            }
            Demonstration {
                points,
                frames: tray.frames_for(target),
            }
        })
        .collect();
    Dataset::new(
        DatasetMeta {
            name: "pickplace".into(),
            channel_names: ["t", "x", "y", "z", "rx", "ry", "rz", "hand"].map(String::from).to_vec(),
        },
        demos,
    )
}

//! Independent oracles shared by the integration and acceptance suites.
//! Nothing here calls into the library's numerics beyond building inputs.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use wtpgmr::{Dataset, DatasetMeta, Demonstration, Gaussian, TaskFrame};

pub fn rng(seed: u64) -> ChaCha8Rng {
    rand::SeedableRng::seed_from_u64(seed)
}

/// Random symmetric positive-definite matrix `L L^T + floor I`.
pub fn random_spd(rng: &mut ChaCha8Rng, d: usize, floor: f64) -> DMatrix<f64> {
    let l = DMatrix::from_fn(d, d, |r, c| if c <= r { rng.random_range(-1.0..1.0) } else { 0.0 });
    &l * l.transpose() + DMatrix::identity(d, d) * floor
}

pub fn random_gaussian(rng: &mut ChaCha8Rng, d: usize) -> Gaussian {
    let mean = DVector::from_fn(d, |_, _| rng.random_range(-2.0..2.0));
    Gaussian::new(mean, random_spd(rng, d, 0.2)).unwrap()
}

/// Draws `n` samples via a hand-rolled lower-triangular factor.
pub fn sample(g: &Gaussian, n: usize, rng: &mut ChaCha8Rng) -> Vec<DVector<f64>> {
    let l = cholesky_lower(g.cov());
    (0..n)
        .map(|_| {
            let z = DVector::from_fn(g.dim(), |_, _| StandardNormal.sample(rng));
            g.mean() + &l * z
        })
        .collect()
}

/// Textbook Cholesky–Banachiewicz; panics on non-SPD input.
pub fn cholesky_lower(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut l = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[(i, k)] * l[(j, k)]).sum();
            if i == j {
                let v = a[(i, i)] - s;
                assert!(v > 0.0, "matrix is not positive definite");
                l[(i, j)] = v.sqrt();
            } else {
                l[(i, j)] = (a[(i, j)] - s) / l[(j, j)];
            }
        }
    }
    l
}

/// Inverse through Gauss-Jordan elimination with partial pivoting.
pub fn gauss_jordan_inverse(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    let mut inv = DMatrix::identity(n, n);
    for c in 0..n {
        let p = (c..n).max_by(|&x, &y| m[(x, c)].abs().total_cmp(&m[(y, c)].abs())).unwrap();
        m.swap_rows(c, p);
        inv.swap_rows(c, p);
        let d = m[(c, c)];
        assert!(d.abs() > 1e-300, "singular");
        for k in 0..n {
            m[(c, k)] /= d;
            inv[(c, k)] /= d;
        }
        for r in 0..n {
            if r != c {
                let f = m[(r, c)];
                for k in 0..n {
                    m[(r, k)] -= f * m[(c, k)];
                    inv[(r, k)] -= f * inv[(c, k)];
                }
            }
        }
    }
    inv
}

pub fn mean_of(xs: &[DVector<f64>]) -> DVector<f64> {
    let n = xs.len() as f64;
    xs.iter().fold(DVector::zeros(xs[0].len()), |a, x| a + x) / n
}

pub fn cov_of(xs: &[DVector<f64>]) -> DMatrix<f64> {
    let m = mean_of(xs);
    let d = m.len();
    let n = xs.len() as f64;
    xs.iter().fold(DMatrix::zeros(d, d), |a, x| a + (x - &m) * (x - &m).transpose()) / (n - 1.0)
}

/// `true` when every entry of the sample mean and covariance lies within
/// `k` standard errors of `g`.
pub fn moments_within(xs: &[DVector<f64>], g: &Gaussian, k: f64) -> bool {
    let n = xs.len() as f64;
    let m = mean_of(xs);
    let c = cov_of(xs);
    let s = g.cov();
    let d = g.dim();
    for i in 0..d {
        let se = (s[(i, i)] / n).sqrt();
        if (m[i] - g.mean()[i]).abs() > k * se {
            return false;
        }
        for j in 0..d {
            let se = ((s[(i, i)] * s[(j, j)] + s[(i, j)] * s[(i, j)]) / n).sqrt();
            if (c[(i, j)] - s[(i, j)]).abs() > k * se {
                return false;
            }
        }
    }
    true
}

/// Planar demonstrations built from `path(demo, s)` with `s` in `[0, 1]`.
pub fn planar_dataset(
    frames: Vec<Vec<TaskFrame>>,
    steps: usize,
    mut path: impl FnMut(usize, f64) -> (f64, f64),
) -> Dataset {
    let demos = frames
        .into_iter()
        .enumerate()
        .map(|(m, fs)| {
            let mut points = DMatrix::zeros(steps, 3);
            for n in 0..steps {
                let (x, y) = path(m, n as f64 / (steps - 1) as f64);
                points[(n, 0)] = (n + 1) as f64;
                points[(n, 1)] = x;
                points[(n, 2)] = y;
            }
            Demonstration { points, frames: fs }
        })
        .collect();
    Dataset::new(DatasetMeta::default(), demos).unwrap()
}

/// Random planar dataset: `m` noisy smooth curves with random start and goal frames.
pub fn random_planar_dataset(rng: &mut ChaCha8Rng, m: usize, steps: usize) -> Dataset {
    let params: Vec<[f64; 6]> = (0..m)
        .map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0)))
        .collect();
    let frames = params
        .iter()
        .map(|p| {
            vec![
                TaskFrame::planar(p[0], p[1], p[2] * 3.0),
                TaskFrame::planar(p[3] + 2.0, p[4], p[5]),
            ]
        })
        .collect();
    let noise: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..2 * steps).map(|_| 0.01 * Distribution::<f64>::sample(&StandardNormal, &mut *rng)).collect::<Vec<f64>>())
        .collect();
    let mut k = 0;
    planar_dataset(frames, steps, |demo, s| {
        let p = &params[demo];
        let x = p[0] + s * (p[3] + 2.0 - p[0]);
        let y = p[1] + s * (p[4] - p[1]) + 0.3 * (std::f64::consts::PI * s).sin();
        let idx = k % steps;
        k += 1;
        (x + noise[demo][2 * idx], y + noise[demo][2 * idx + 1])
    })
}

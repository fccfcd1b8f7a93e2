//! Dense multivariate Gaussian algebra.
//!
//! Everything here is a pure function on small dense matrices (the state
//! dimension is at most a handful of channels). Inversions and determinants
//! go through a Cholesky factorisation; when a factorisation fails the matrix
//! is regularised with `eps * I`, `eps = 1e-6 * mean(diag)`, and retried once.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Relative regularisation applied when a covariance fails to factorise.
pub const DEFAULT_REL_EPS: f64 = 1e-6;

/// Largest condition number accepted for a frame transform.
pub const MAX_CONDITION: f64 = 1e12;

const SYMMETRY_TOL: f64 = 1e-9;
const PSD_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl Gaussian {
    /// Builds a Gaussian after checking dimensions, symmetry and
    /// positive semi-definiteness of `cov`.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if !cov.is_square() || cov.nrows() != mean.len() {
            return Err(Error::dim(format!(
                "mean has {} entries but covariance is {}x{}",
                mean.len(),
                cov.nrows(),
                cov.ncols()
            )));
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite Gaussian parameters".into()));
        }
        check_symmetric(&cov)?;
        check_psd(&cov)?;
        Ok(Gaussian { mean, cov })
    }

    /// Builds a Gaussian, symmetrising `cov` first. Used for results of
    /// arithmetic whose symmetry is only broken by rounding.
    pub(crate) fn from_parts(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        Gaussian::new(mean, symmetrize(&cov))
    }

    pub fn standard(dim: usize) -> Self {
        Gaussian {
            mean: DVector::zeros(dim),
            cov: DMatrix::identity(dim, dim),
        }
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn into_parts(self) -> (DVector<f64>, DMatrix<f64>) {
        (self.mean, self.cov)
    }

    /// Affine push-forward: `N(A mu + b, A S A^T)`.
    pub fn transform(&self, a: &DMatrix<f64>, b: &DVector<f64>) -> Result<Gaussian> {
        let d = self.dim();
        if a.nrows() != d || a.ncols() != d || b.len() != d {
            return Err(Error::dim(format!(
                "transform of a {d}-dim Gaussian by a {}x{} matrix and {}-vector",
                a.nrows(),
                a.ncols(),
                b.len()
            )));
        }
        check_invertible(a)?;
        let mean = a * &self.mean + b;
        let cov = a * &self.cov * a.transpose();
        Gaussian::from_parts(mean, cov)
    }

    /// Covariance divided by `gamma`; the mean is untouched.
    pub fn scale_cov(&self, gamma: f64) -> Result<Gaussian> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::invalid(format!("covariance weight must be positive, got {gamma}")));
        }
        Ok(Gaussian {
            mean: self.mean.clone(),
            cov: &self.cov / gamma,
        })
    }

    /// Conditional distribution of the `out_idx` channels given that the
    /// `in_idx` channels equal `value`.
    pub fn condition(&self, in_idx: &[usize], out_idx: &[usize], value: &DVector<f64>) -> Result<Gaussian> {
        let d = self.dim();
        if value.len() != in_idx.len() {
            return Err(Error::dim(format!(
                "conditioning value has {} entries for {} input indices",
                value.len(),
                in_idx.len()
            )));
        }
        for &i in in_idx.iter().chain(out_idx) {
            if i >= d {
                return Err(Error::dim(format!("index {i} out of range for dimension {d}")));
            }
        }
        if let Some(i) = in_idx.iter().find(|i| out_idx.contains(i)) {
            return Err(Error::invalid(format!("index {i} is both an input and an output")));
        }

        let mu_in = select_vec(&self.mean, in_idx);
        let mu_out = select_vec(&self.mean, out_idx);
        let s_ii = select(&self.cov, in_idx, in_idx);
        let s_oi = select(&self.cov, out_idx, in_idx);
        let s_oo = select(&self.cov, out_idx, out_idx);

        let chol = Cholesky::new(s_ii).ok_or_else(|| Error::Singular("conditioning block is singular".into()))?;
        let gain = chol.solve(&s_oi.transpose()).transpose();
        let mean = mu_out + &gain * (value - mu_in);
        let cov = s_oo - &gain * s_oi.transpose();
        Gaussian::from_parts(mean, cov)
    }

    pub fn log_pdf(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::dim("log_pdf point dimension"));
        }
        let (chol, _) = factor(&self.cov)?;
        let diff = x - &self.mean;
        let z = chol.l().solve_lower_triangular(&diff).expect("triangular solve on a Cholesky factor");
        let logdet = chol_logdet(&chol);
        let d = self.dim() as f64;
        Ok(-0.5 * (z.norm_squared() + logdet + d * (2.0 * std::f64::consts::PI).ln()))
    }

    pub fn to_information(&self) -> Result<Information> {
        let (chol, _) = factor(&self.cov)?;
        let precision = symmetrize(&chol.inverse());
        let eta = &precision * &self.mean;
        Ok(Information { precision, eta })
    }
}

/// Canonical (information) form of a Gaussian: precision `L = S^-1` and
/// `eta = L mu`. Products of Gaussians are sums in this form.
#[derive(Debug, Clone, PartialEq)]
pub struct Information {
    pub precision: DMatrix<f64>,
    pub eta: DVector<f64>,
}

impl Information {
    pub fn zeros(dim: usize) -> Self {
        Information {
            precision: DMatrix::zeros(dim, dim),
            eta: DVector::zeros(dim),
        }
    }

    /// Accumulates `weight * other`; weighting an information term by
    /// `gamma` is the same as dividing its covariance by `gamma`.
    pub fn add_scaled(&mut self, other: &Information, weight: f64) {
        self.precision += &other.precision * weight;
        self.eta += &other.eta * weight;
    }

    pub fn to_gaussian(&self) -> Result<Gaussian> {
        let (chol, _) = factor(&self.precision)?;
        let cov = chol.inverse();
        let mean = chol.solve(&self.eta);
        Gaussian::from_parts(mean, cov)
    }
}

/// Normalised product of Gaussians, computed in precision form.
pub fn product(gs: &[Gaussian]) -> Result<Gaussian> {
    let first = gs.first().ok_or_else(|| Error::invalid("product of an empty list"))?;
    let d = first.dim();
    if gs.len() == 1 {
        return Ok(first.clone());
    }
    let mut acc = Information::zeros(d);
    for g in gs {
        if g.dim() != d {
            return Err(Error::dim(format!("product of {d}-dim and {}-dim Gaussians", g.dim())));
        }
        acc.add_scaled(&g.to_information()?, 1.0);
    }
    acc.to_gaussian()
}

/// `cov + eps * I`.
pub fn regularize(cov: &DMatrix<f64>, eps: f64) -> DMatrix<f64> {
    let n = cov.nrows();
    cov + DMatrix::identity(n, n) * eps
}

/// `DEFAULT_REL_EPS * mean(diag)`, or `DEFAULT_REL_EPS` itself for an all-zero diagonal.
pub fn default_eps(cov: &DMatrix<f64>) -> f64 {
    let n = cov.nrows().max(1) as f64;
    let mean_diag = cov.diagonal().iter().map(|v| v.abs()).sum::<f64>() / n;
    if mean_diag > 0.0 {
        DEFAULT_REL_EPS * mean_diag
    } else {
        DEFAULT_REL_EPS
    }
}

/// `log det(cov)` through a Cholesky factor.
pub fn log_det(cov: &DMatrix<f64>) -> Result<f64> {
    let (chol, _) = factor(cov)?;
    Ok(chol_logdet(&chol))
}

/// `det(cov)^alpha`, evaluated as `exp(alpha * log det)`.
pub fn det_power(cov: &DMatrix<f64>, alpha: f64) -> Result<f64> {
    if alpha == 0.0 {
        log_det(cov)?;
        return Ok(1.0);
    }
    Ok((alpha * log_det(cov)?).exp())
}

/// Cholesky factorisation with a single regularised retry. The returned flag
/// reports whether the retry was needed.
pub fn factor(cov: &DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, bool)> {
    if !cov.is_square() {
        return Err(Error::dim("cannot factor a non-square matrix"));
    }
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite matrix entries".into()));
    }
    if let Some(chol) = Cholesky::new(cov.clone()) {
        return Ok((chol, false));
    }
    let reg = regularize(cov, default_eps(cov));
    Cholesky::new(reg)
        .map(|c| (c, true))
        .ok_or_else(|| Error::NotPsd("matrix is not positive definite after regularisation".into()))
}

fn chol_logdet(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub(crate) fn check_invertible(a: &DMatrix<f64>) -> Result<()> {
    let sv = a.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if !(min > 0.0) || max / min >= MAX_CONDITION {
        return Err(Error::Singular(format!(
            "matrix condition number {:.3e} exceeds {MAX_CONDITION:.0e}",
            if min > 0.0 { max / min } else { f64::INFINITY }
        )));
    }
    Ok(())
}

fn check_symmetric(cov: &DMatrix<f64>) -> Result<()> {
    let scale = cov.amax().max(f64::MIN_POSITIVE);
    let n = cov.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (cov[(i, j)] - cov[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::NotPsd(format!("covariance is not symmetric at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

fn check_psd(cov: &DMatrix<f64>) -> Result<()> {
    if cov.nrows() == 0 {
        return Ok(());
    }
    // Cheap path: a successful Cholesky proves positive definiteness.
    if Cholesky::new(cov.clone()).is_some() {
        return Ok(());
    }
    let trace = cov.trace().abs();
    let eig = symmetrize(cov).symmetric_eigenvalues();
    let min = eig.min();
    if min < -PSD_TOL * trace.max(f64::MIN_POSITIVE) {
        return Err(Error::NotPsd(format!("smallest eigenvalue {min:.3e}")));
    }
    Ok(())
}

pub(crate) fn select(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |r, c| m[(rows[r], cols[c])])
}

pub(crate) fn select_vec(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

//! Small dense helpers shared by the models, Kalman and particle code.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Tolerance for positive semi-definiteness checks.
pub const PSD_TOLERANCE: f64 = 1e-10;

pub fn symmetrise(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in 0..i {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Symmetrise and verify PSD, with the eigenvalue floor scaled by the matrix magnitude.
pub fn checked_covariance(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::Config(format!("{what} must be square")));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config(format!("{what} has non-finite entries")));
    }
    let s = symmetrise(m);
    if s.nrows() == 0 {
        return Ok(s);
    }
    let scale = s.amax().max(1.0);
    let min_eig = s.clone().symmetric_eigenvalues().min();
    if min_eig < -PSD_TOLERANCE * scale {
        return Err(Error::Config(format!(
            "{what} is not positive semi-definite (min eigenvalue {min_eig:e})"
        )));
    }
    Ok(s)
}

/// Lower factor `L` with `L Lᵀ = m` for a PSD matrix. Falls back to an
/// eigen-decomposition when Cholesky fails on a singular matrix.
pub fn psd_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(ch) = m.clone().cholesky() {
        return ch.l();
    }
    let eig = m.clone().symmetric_eigen();
    let mut f = eig.eigenvectors.clone();
    for (j, lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        f.column_mut(j).scale_mut(s);
    }
    f
}

/// `out = m · x` for a dense matrix and slice vectors.
#[inline]
pub fn mat_vec(m: &DMatrix<f64>, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(m.ncols(), x.len());
    debug_assert_eq!(m.nrows(), out.len());
    out.iter_mut().for_each(|o| *o = 0.0);
    for (j, &xj) in x.iter().enumerate() {
        if xj == 0.0 {
            continue;
        }
        let col = m.column(j);
        for (o, &mij) in out.iter_mut().zip(col.iter()) {
            *o += mij * xj;
        }
    }
}

/// `out += l · z` where `l` is lower triangular.
#[inline]
pub fn add_lower_mul(l: &DMatrix<f64>, z: &[f64], out: &mut [f64]) {
    for (j, &zj) in z.iter().enumerate() {
        for i in j..out.len() {
            out[i] += l[(i, j)] * zj;
        }
    }
}

/// Solve `l · w = r` in place for lower-triangular `l`.
#[inline]
pub fn forward_substitute(l: &DMatrix<f64>, r: &mut [f64]) {
    let n = r.len();
    for i in 0..n {
        let mut acc = r[i];
        for j in 0..i {
            acc -= l[(i, j)] * r[j];
        }
        r[i] = acc / l[(i, i)];
    }
}

pub fn log_det_from_cholesky(l: &DMatrix<f64>) -> f64 {
    2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

pub fn to_dvector(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

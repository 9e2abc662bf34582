//! Small dense linear-algebra utilities on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative eigenvalue floor below which a symmetric matrix counts as singular.
const SINGULAR_RCOND: f64 = 1e-12;

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Inverse of a symmetric positive-definite matrix, or `None` when the
/// Cholesky factorisation fails or the matrix is numerically singular.
pub fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if m.nrows() == 0 {
        return Some(DMatrix::zeros(0, 0));
    }
    if !m.iter().all(|v| v.is_finite()) || is_numerically_singular(m) {
        return None;
    }
    let chol = m.clone().cholesky()?;
    let mut inv = chol.inverse();
    symmetrize(&mut inv);
    Some(inv)
}

/// True when the smallest eigenvalue is not clearly positive relative to the largest.
pub fn is_numerically_singular(m: &DMatrix<f64>) -> bool {
    if m.nrows() == 0 {
        return false;
    }
    let eig = SymmetricEigen::new(m.clone());
    let max = eig.eigenvalues.iter().copied().fold(0.0f64, |a, b| a.max(b.abs()));
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    !(max > 0.0) || min <= SINGULAR_RCOND * max
}

/// Moore-Penrose pseudo-inverse of a symmetric matrix via its eigendecomposition.
pub fn symmetric_pinv(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let eig = SymmetricEigen::new(m.clone());
    let max = eig.eigenvalues.iter().copied().fold(0.0f64, |a, b| a.max(b.abs()));
    let cutoff = max * n as f64 * f64::EPSILON;
    let mut out = DMatrix::zeros(n, n);
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda.abs() > cutoff {
            let v = eig.eigenvectors.column(k);
            out += (v * v.transpose()) / lambda;
        }
    }
    out
}

/// Makes a covariance matrix usable as a prior scale: symmetrise, then add
/// `1e-8 * mean(diag)` to the diagonal (escalating x10, at most 3 times)
/// until the Cholesky factorisation succeeds.
pub fn ensure_spd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut out = m.clone();
    symmetrize(&mut out);
    if out.nrows() == 0 {
        return Ok(out);
    }
    if !out.iter().all(|v| v.is_finite()) {
        return Err(Error::NonSpdCovariance);
    }
    if out.clone().cholesky().is_some() {
        return Ok(out);
    }
    let n = out.nrows();
    let mean_diag = out.diagonal().mean();
    let mut jitter = if mean_diag > 0.0 { 1e-8 * mean_diag } else { 1e-8 };
    for _ in 0..4 {
        let candidate = &out + DMatrix::identity(n, n) * jitter;
        if candidate.clone().cholesky().is_some() {
            return Ok(candidate);
        }
        jitter *= 10.0;
    }
    Err(Error::NonSpdCovariance)
}

/// Log-determinant of an SPD matrix from its Cholesky factor.
pub fn spd_log_det(m: &DMatrix<f64>) -> Option<f64> {
    if m.nrows() == 0 {
        return Some(0.0);
    }
    let chol = m.clone().cholesky()?;
    Some(2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// `x^T A x`.
pub fn quad_form(a: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    (x.transpose() * a * x)[(0, 0)]
}

/// Drops the first row and column.
pub fn drop_first(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    m.view((1, 1), (n - 1, n - 1)).into_owned()
}

//! Thin bridge to faer for the dense factorizations ndarray does not provide.

use faer::{Mat, Side};
use ndarray::Array2;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub(crate) fn to_faer(m: &Array2<C64>) -> Mat<C64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[[i, j]])
}

/// Eigenvalues (ascending) and eigenvectors (columns) of a Hermitian matrix.
/// Only the lower triangle is read.
pub fn hermitian_eigh(m: &Array2<C64>) -> Result<(Vec<f64>, Array2<C64>)> {
    let n = m.nrows();
    let evd = to_faer(m)
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Solver(format!("eigendecomposition failed: {e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let values = (0..n).map(|i| s[i].re).collect();
    let vectors = Array2::from_shape_fn((n, n), |(i, j)| u[(i, j)]);
    Ok((values, vectors))
}

/// Eigenvalues (ascending) of a Hermitian matrix.
pub fn hermitian_eigvals(m: &Array2<C64>) -> Result<Vec<f64>> {
    let vals = to_faer(m)
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Solver(format!("eigenvalue solve failed: {e:?}")))?;
    Ok(vals)
}

pub(crate) fn adjoint(m: &Array2<C64>) -> Array2<C64> {
    m.t().mapv(|z| z.conj())
}

pub(crate) fn max_abs(m: &Array2<C64>) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub(crate) fn trace(m: &Array2<C64>) -> C64 {
    m.diag().sum()
}

//! Deterministic numerical kernels: column centering, PCA and rank-revealing QR.

mod pca;
mod qr;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub use pca::{leading_direction, pca, PcaResult};
pub use qr::{qr_rank_revealing, QrFactorization, DEFAULT_RANK_TOL};

#[derive(Debug, Error, PartialEq)]
pub enum LinalgError {
    #[error("requested {requested} components but at most {max} are available")]
    DimensionTooLarge { requested: usize, max: usize },
    #[error("matrix is identically zero")]
    ZeroMatrix,
    #[error("matrix is empty")]
    Empty,
    #[error("non-finite entry in input")]
    NonFinite,
}

/// Subtracts the column mean from every column. Returns the centred copy and the mean.
pub fn center_columns(x: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let (n, m) = x.shape();
    let mut mean = DVector::zeros(m);
    if n == 0 {
        return (x.clone(), mean);
    }
    for j in 0..m {
        mean[j] = x.column(j).iter().sum::<f64>() / n as f64;
    }
    (subtract_row(x, &mean), mean)
}

/// Returns `x - 1·vᵀ`.
pub fn subtract_row(x: &DMatrix<f64>, v: &DVector<f64>) -> DMatrix<f64> {
    let mut out = x.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        let mu = v[j];
        col.iter_mut().for_each(|e| *e -= mu);
    }
    out
}

/// Flips `v` so that its entry of largest magnitude is positive (lowest index on ties).
pub fn canonical_sign(v: &mut DVector<f64>) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if !v.is_empty() && v[best] < 0.0 {
        v.neg_mut();
    }
}

/// Largest deviation of `aᵀa` from the identity.
pub fn orthonormality_error(a: &DMatrix<f64>) -> f64 {
    let g = a.transpose() * a;
    let mut worst = 0.0f64;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

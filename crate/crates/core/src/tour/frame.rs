use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::TourError;
use crate::linalg::orthonormality_error;

const FRAME_ORTHO_TOL: f64 = 1e-10;

/// A 2-column orthonormal projection matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    basis: DMatrix<f64>,
    pub label: String,
}

impl Frame {
    pub fn new(basis: DMatrix<f64>, label: impl Into<String>) -> Result<Self, TourError> {
        if basis.ncols() != 2 || basis.nrows() < 2 {
            return Err(TourError::DimensionMismatch {
                expected: 2,
                found: basis.ncols(),
            });
        }
        let err = orthonormality_error(&basis);
        if !(err <= FRAME_ORTHO_TOL) {
            return Err(TourError::NotOrthonormal(err));
        }
        Ok(Frame {
            basis,
            label: label.into(),
        })
    }

    /// Plane spanned by two coordinate axes of an `dim`-dimensional space.
    pub fn coordinate_plane(dim: usize, a: usize, b: usize, label: impl Into<String>) -> Result<Self, TourError> {
        if a >= dim || b >= dim || a == b {
            return Err(TourError::DimensionMismatch { expected: dim, found: a.max(b) });
        }
        let mut basis = DMatrix::zeros(dim, 2);
        basis[(a, 0)] = 1.0;
        basis[(b, 1)] = 1.0;
        Frame::new(basis, label)
    }

    pub(crate) fn from_trusted(basis: DMatrix<f64>, label: impl Into<String>) -> Self {
        Frame {
            basis,
            label: label.into(),
        }
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }
}

/// Haar-random plane in `r` dimensions from a fixed seed.
pub fn random_frame(r: usize, seed: u64) -> Result<Frame, TourError> {
    random_frame_from(&mut ChaCha8Rng::seed_from_u64(seed), r)
}

/// Orthonormalises two independent standard-Gaussian vectors; redraws on a
/// numerically collinear pair.
pub fn random_frame_from<R: Rng>(rng: &mut R, r: usize) -> Result<Frame, TourError> {
    if r < 2 {
        return Err(TourError::RankTooSmall(r));
    }
    loop {
        let a = DVector::from_fn(r, |_, _| rng.sample::<f64, _>(StandardNormal));
        let b = DVector::from_fn(r, |_, _| rng.sample::<f64, _>(StandardNormal));
        let Some(basis) = orthonormal_pair(&a, &b) else {
            continue;
        };
        return Ok(Frame::from_trusted(basis, "random"));
    }
}

/// Gram–Schmidt on `[a, b]`, with one extra pass on the second column.
pub(crate) fn orthonormal_pair(a: &DVector<f64>, b: &DVector<f64>) -> Option<DMatrix<f64>> {
    let na = a.norm();
    if !(na > 0.0) {
        return None;
    }
    let u = a / na;
    let mut v = b - &u * u.dot(b);
    if v.norm() <= 1e-10 * b.norm() || !(v.norm() > 0.0) {
        return None;
    }
    v -= &u * u.dot(&v);
    let v = &v / v.norm();
    let mut m = DMatrix::zeros(a.len(), 2);
    m.set_column(0, &u);
    m.set_column(1, &v);
    Some(m)
}

/// Principal angles between the planes of two frames, ascending.
///
/// Cosines come from the singular values of `aᵀb`, sines from those of
/// `b − a·aᵀb`; pairing them through `atan2` keeps precision at both ends.
pub fn principal_angles(a: &DMatrix<f64>, b: &DMatrix<f64>) -> [f64; 2] {
    let c = a.transpose() * b;
    let mut cos = c.clone().singular_values().as_slice().to_vec();
    let resid = b - a * &c;
    let mut sin = resid.singular_values().as_slice().to_vec();
    cos.sort_by(|x, y| y.total_cmp(x));
    sin.sort_by(f64::total_cmp);
    sin.resize(2, 0.0);
    [sin[0].atan2(cos[0].min(1.0)), sin[1].atan2(cos[1].min(1.0))]
}

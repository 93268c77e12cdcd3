//! Planned and random tours through the span of the class vectors.
//!
//! The class vectors are factored `Θ = Q R` with a rank-revealing QR. Data is
//! projected once into the r-dimensional coordinates `(X − 1x̄ᵀ)Q`, and every
//! frame afterwards is an r×2 orthonormal matrix in that reduced space. Column
//! `k` of `R` is the image of θ_k, so a frame built from two columns of `R`
//! shows the same picture as the ambient frame built from the two θs.

mod frame;
mod geodesic;
mod preset;

use nalgebra::DMatrix;
use rayon::prelude::*;
use thiserror::Error;

use crate::classvec::ClassVectorSet;
use crate::ingest::LayerActivations;
use crate::linalg::{qr_rank_revealing, subtract_row, LinalgError};

pub use frame::{principal_angles, random_frame, random_frame_from, Frame};
pub use geodesic::{geodesic_path, Geodesic, PathFrame, TourPath, DEFAULT_STEPS_PER_SEGMENT};
pub use preset::TourPreset;

/// Relative tolerance for the cheap triangular-solve route to be accepted.
pub const IDENTITY_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum TourError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("class vectors must have their signs fixed before building a tour")]
    SignsNotFixed,
    #[error("class axes {j} and {k} are collinear in the tour space")]
    CollinearAxes { j: usize, k: usize },
    #[error("a frame needs two different classes, got {0} twice")]
    SameClass(usize),
    #[error("class {class} out of range for {k} classes")]
    ClassOutOfRange { class: usize, k: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("frame columns are not orthonormal (error {0:.3e})")]
    NotOrthonormal(f64),
    #[error("random frames need at least 2 dimensions, got {0}")]
    RankTooSmall(usize),
    #[error("tour needs at least one keyframe and one step per segment")]
    EmptyPath,
    #[error("class \"{0}\" is not in the manifest's class names")]
    MissingClass(String),
    #[error("unknown tour preset \"{0}\"")]
    UnknownPreset(String),
}

/// How [`TourBasis::projected`] was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionRoute {
    /// `(X − 1x̄ᵀ)Θ R⁻¹`, accepted after checking against the direct product.
    TriangularSolve,
    /// `(X − 1x̄ᵀ)Q`.
    Direct,
}

#[derive(Debug, Clone)]
pub struct TourBasis {
    /// M×r, orthonormal.
    pub q: DMatrix<f64>,
    /// r×K; column k is the image of θ_k.
    pub r_mat: DMatrix<f64>,
    /// N×r tour coordinates.
    pub projected: DMatrix<f64>,
    pub rank: usize,
    pub route: ProjectionRoute,
    /// Relative gap between the two routes; `None` when only the direct one applies.
    pub identity_residual: Option<f64>,
}

impl TourBasis {
    /// Tours the raw coordinates themselves, with no centering or reduction.
    pub fn ambient(x: &DMatrix<f64>) -> Self {
        let m = x.ncols();
        TourBasis {
            q: DMatrix::identity(m, m),
            r_mat: DMatrix::identity(m, m),
            projected: x.clone(),
            rank: m,
            route: ProjectionRoute::Direct,
            identity_residual: None,
        }
    }

    pub fn class_axis_image(&self, k: usize) -> nalgebra::DVectorView<'_, f64> {
        self.r_mat.column(k)
    }

    pub fn k(&self) -> usize {
        self.r_mat.ncols()
    }

    /// Lifts a reduced-space frame back to M×2 ambient directions.
    pub fn ambient_frame(&self, frame: &Frame) -> DMatrix<f64> {
        &self.q * frame.basis()
    }

    /// `[r̂_j, r_k′]` for each pair, labelled with the class names when given.
    pub fn planned_frames(&self, pairs: &[(usize, usize)], class_names: Option<&[String]>) -> Result<Vec<Frame>, TourError> {
        pairs
            .iter()
            .map(|&(j, k)| {
                let label = match class_names {
                    Some(names) if j < names.len() && k < names.len() => format!("{} vs {}", names[j], names[k]),
                    _ => format!("{j} vs {k}"),
                };
                self.pair_frame(j, k, label)
            })
            .collect()
    }

    fn pair_frame(&self, j: usize, k: usize, label: String) -> Result<Frame, TourError> {
        for class in [j, k] {
            if class >= self.k() {
                return Err(TourError::ClassOutOfRange { class, k: self.k() });
            }
        }
        if j == k {
            return Err(TourError::SameClass(j));
        }
        let rj = self.r_mat.column(j);
        let rk = self.r_mat.column(k);
        let nj = rj.norm();
        if !(nj > 0.0) {
            return Err(TourError::CollinearAxes { j, k });
        }
        let u = rj / nj;
        let mut v = rk - &u * u.dot(&rk);
        if v.norm() <= 1e-10 * rk.norm() {
            return Err(TourError::CollinearAxes { j, k });
        }
        v -= &u * u.dot(&v);
        v /= v.norm();
        let mut basis = DMatrix::zeros(self.rank, 2);
        basis.set_column(0, &u);
        basis.set_column(1, &v);
        Frame::new(basis, label)
    }
}

pub fn build_tour_basis(x: &LayerActivations, cvs: &ClassVectorSet, tol: f64) -> Result<TourBasis, TourError> {
    if !cvs.sign_fixed {
        return Err(TourError::SignsNotFixed);
    }
    if x.m() != cvs.m() {
        return Err(TourError::DimensionMismatch {
            expected: cvs.m(),
            found: x.m(),
        });
    }
    let qr = qr_rank_revealing(&cvs.theta, tol)?;
    let xc = subtract_row(&x.values, &cvs.global_mean);
    let direct = &xc * &qr.q;

    let mut route = ProjectionRoute::Direct;
    let mut identity_residual = None;
    let mut projected = direct;
    if qr.is_full_rank() {
        if let Some(solved) = qr.solve_right(&(&xc * &cvs.theta)) {
            let scale = projected.norm().max(f64::MIN_POSITIVE);
            let residual = (&solved - &projected).norm() / scale;
            identity_residual = Some(residual);
            if residual <= IDENTITY_TOL {
                route = ProjectionRoute::TriangularSolve;
                projected = solved;
            } else {
                log::warn!("triangular-solve projection off by {residual:.3e}; using direct product");
            }
        }
    }
    Ok(TourBasis {
        q: qr.q,
        r_mat: qr.r_mat,
        projected,
        rank: qr.rank,
        route,
        identity_residual,
    })
}

/// N×2 coordinates for every frame of `path`, in path order.
pub fn render_tour(basis: &TourBasis, path: &TourPath) -> Result<Vec<DMatrix<f64>>, TourError> {
    if path.dim() != basis.rank {
        return Err(TourError::DimensionMismatch {
            expected: basis.rank,
            found: path.dim(),
        });
    }
    Ok(path
        .frames
        .par_iter()
        .map(|f| &basis.projected * f.frame.basis())
        .collect())
}

#[cfg(test)]
mod tests;

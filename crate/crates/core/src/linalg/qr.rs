//! Householder QR with column pivoting (Businger–Golub), truncated at the numerical rank.

use nalgebra::{DMatrix, DVector};

use super::LinalgError;

/// Relative threshold on `|R_ii| / |R_11|` below which a pivot counts as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;
const PIVOT_TIE_SLACK: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct QrFactorization {
    /// M×r, orthonormal columns.
    pub q: DMatrix<f64>,
    /// r×K with columns in the input's order, so `q · r_mat ≈ Θ`.
    pub r_mat: DMatrix<f64>,
    pub rank: usize,
    pub tolerance_used: f64,
    /// `pivots[j]` is the input column placed at position `j`.
    pub pivots: Vec<usize>,
    /// Magnitudes of the pivoted diagonal, `|R_ii|`, for every elimination step.
    pub pivot_magnitudes: Vec<f64>,
}

impl QrFactorization {
    /// r×K upper-trapezoidal factor in pivoted column order.
    pub fn r_pivoted(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rank, self.pivots.len(), |i, j| self.r_mat[(i, self.pivots[j])])
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank == self.r_mat.ncols()
    }

    /// Computes `y · R⁻¹` by triangular solve. `None` unless the factor is square and full rank.
    pub fn solve_right(&self, y: &DMatrix<f64>) -> Option<DMatrix<f64>> {
        let k = self.r_mat.ncols();
        if !self.is_full_rank() || y.ncols() != k {
            return None;
        }
        // R = R_piv·Pᵀ, so y·R⁻¹ = (y·P)·R_piv⁻¹
        let yp = DMatrix::from_fn(y.nrows(), k, |i, j| y[(i, self.pivots[j])]);
        let rt = self.r_pivoted().transpose();
        let zt = rt.solve_lower_triangular(&yp.transpose())?;
        Some(zt.transpose())
    }

    pub fn reconstruction_error(&self, theta: &DMatrix<f64>) -> f64 {
        (&self.q * &self.r_mat - theta).norm()
    }
}

pub fn qr_rank_revealing(theta: &DMatrix<f64>, tol: f64) -> Result<QrFactorization, LinalgError> {
    let (m, k) = theta.shape();
    if m == 0 || k == 0 {
        return Err(LinalgError::Empty);
    }
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    if theta.iter().all(|&v| v == 0.0) {
        return Err(LinalgError::ZeroMatrix);
    }

    let mut a = theta.clone();
    let mut pivots: Vec<usize> = (0..k).collect();
    let steps = m.min(k);
    let mut reflectors: Vec<Option<DVector<f64>>> = Vec::with_capacity(steps);
    let mut diag = Vec::with_capacity(steps);

    for i in 0..steps {
        // trailing column norms are recomputed each step; K is small.
        // near-ties keep the lower index so already-orthogonal input stays in order
        let mut best = i;
        let mut best_norm = a.view((i, i), (m - i, 1)).norm_squared();
        for j in (i + 1)..k {
            let norm = a.view((i, j), (m - i, 1)).norm_squared();
            if norm > best_norm * (1.0 + PIVOT_TIE_SLACK) {
                best_norm = norm;
                best = j;
            }
        }
        if best != i {
            a.swap_columns(i, best);
            pivots.swap(i, best);
        }

        let x = a.view((i, i), (m - i, 1)).column(0).into_owned();
        let xnorm = x.norm();
        if xnorm == 0.0 {
            reflectors.push(None);
            diag.push(0.0);
            continue;
        }
        let alpha = if x[0] >= 0.0 { -xnorm } else { xnorm };
        let mut v = x;
        v[0] -= alpha;
        let vv = v.norm_squared();
        if vv == 0.0 {
            reflectors.push(None);
            diag.push(a[(i, i)]);
            continue;
        }
        // a[i.., i..] -= (2/vᵀv) v (vᵀ a[i.., i..])
        let scale = 2.0 / vv;
        for j in i..k {
            let mut col = a.view_mut((i, j), (m - i, 1));
            let dot = v.dot(&col.column(0));
            col.column_mut(0).axpy(-scale * dot, &v, 1.0);
        }
        for r in (i + 1)..m {
            a[(r, i)] = 0.0;
        }
        a[(i, i)] = alpha;
        diag.push(alpha);
        reflectors.push(Some(v));
    }

    let lead = diag[0].abs();
    let rank = diag.iter().take_while(|d| d.abs() > tol * lead).count();
    if rank == 0 {
        return Err(LinalgError::ZeroMatrix);
    }

    // Q = H_0 ⋯ H_{r-1} applied to the first r columns of the identity
    let mut q = DMatrix::<f64>::identity(m, rank);
    for i in (0..rank).rev() {
        if let Some(v) = &reflectors[i] {
            let scale = 2.0 / v.norm_squared();
            for j in 0..rank {
                let mut col = q.view_mut((i, j), (m - i, 1));
                let dot = v.dot(&col.column(0));
                col.column_mut(0).axpy(-scale * dot, v, 1.0);
            }
        }
    }
    let mut r_piv = a.rows(0, rank).into_owned();
    for i in 0..rank {
        if r_piv[(i, i)] < 0.0 {
            r_piv.row_mut(i).neg_mut();
            q.column_mut(i).neg_mut();
        }
    }
    let mut r_mat = DMatrix::zeros(rank, k);
    for (pos, &orig) in pivots.iter().enumerate() {
        r_mat.set_column(orig, &r_piv.column(pos));
    }

    Ok(QrFactorization {
        q,
        r_mat,
        rank,
        tolerance_used: tol,
        pivots,
        pivot_magnitudes: diag.iter().map(|d| d.abs()).collect(),
    })
}

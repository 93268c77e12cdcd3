use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{canonical_sign, LinalgError};

#[derive(Debug, Clone)]
pub struct PcaResult {
    /// M×d, orthonormal columns.
    pub components: DMatrix<f64>,
    /// Non-increasing, clamped at zero.
    pub eigenvalues: DVector<f64>,
    /// N×d, `xc · components`.
    pub scores: DMatrix<f64>,
    pub column_mean: DVector<f64>,
}

impl PcaResult {
    /// Projects new rows with the stored mean and components.
    pub fn project(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        super::subtract_row(x, &self.column_mean) * &self.components
    }
}

/// Top-`d` principal components of an already-centred matrix.
///
/// Uses the covariance `xcᵀxc/(n-1)` when `m <= n` and the `n×n` kernel
/// `xc·xcᵀ/(n-1)` otherwise. Each component is sign-normalised so that its
/// largest-magnitude entry is positive. The returned `column_mean` is zero;
/// callers that centred the data themselves should overwrite it.
pub fn pca(xc: &DMatrix<f64>, d: usize) -> Result<PcaResult, LinalgError> {
    let (n, m) = xc.shape();
    if n == 0 || m == 0 {
        return Err(LinalgError::Empty);
    }
    let max = n.min(m);
    if d == 0 || d > max {
        return Err(LinalgError::DimensionTooLarge { requested: d, max });
    }
    if xc.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    let denom = (n.max(2) - 1) as f64;
    let (components, eigenvalues) = top_eigen(xc, d, denom);
    let scores = xc * &components;
    Ok(PcaResult {
        components,
        eigenvalues,
        scores,
        column_mean: DVector::zeros(m),
    })
}

/// Unit vector maximising `θᵀ aᵀa θ`, with its Rayleigh quotient. No centring is applied.
pub fn leading_direction(a: &DMatrix<f64>) -> Option<(DVector<f64>, f64)> {
    if a.nrows() == 0 || a.ncols() == 0 || a.iter().all(|v| *v == 0.0) {
        return None;
    }
    let (c, ev) = top_eigen(a, 1, 1.0);
    Some((c.column(0).into_owned(), ev[0]))
}

fn sorted_order(values: &DVector<f64>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    // stable: equal eigenvalues keep the solver's order
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    order
}

fn top_eigen(x: &DMatrix<f64>, d: usize, denom: f64) -> (DMatrix<f64>, DVector<f64>) {
    let (n, m) = x.shape();
    let mut components = DMatrix::zeros(m, d);
    let mut eigenvalues = DVector::zeros(d);

    if m <= n {
        let cov = (x.transpose() * x) / denom;
        let eig = SymmetricEigen::new(cov);
        for (slot, &idx) in sorted_order(&eig.eigenvalues).iter().take(d).enumerate() {
            components.set_column(slot, &eig.eigenvectors.column(idx));
            eigenvalues[slot] = eig.eigenvalues[idx].max(0.0);
        }
    } else {
        let gram = (x * x.transpose()) / denom;
        let eig = SymmetricEigen::new(gram);
        let order = sorted_order(&eig.eigenvalues);
        let lead = eig.eigenvalues[order[0]].max(0.0);
        for (slot, &idx) in order.iter().take(d).enumerate() {
            let lambda = eig.eigenvalues[idx].max(0.0);
            eigenvalues[slot] = lambda;
            let v = x.transpose() * eig.eigenvectors.column(idx);
            let norm = v.norm();
            // v has norm sqrt(denom·λ); below this floor it is rounding noise
            if lambda > lead * 1e-13 && norm > 0.0 {
                components.set_column(slot, &(v / norm));
            }
        }
    }

    reorthonormalize(&mut components);
    for j in 0..d {
        let mut c = components.column(j).into_owned();
        canonical_sign(&mut c);
        components.set_column(j, &c);
    }
    (components, eigenvalues)
}

/// Two passes of modified Gram–Schmidt; zero or dependent columns are replaced
/// by the standard basis vector with the largest residual.
fn reorthonormalize(a: &mut DMatrix<f64>) {
    let (m, d) = a.shape();
    for j in 0..d {
        let mut v = a.column(j).into_owned();
        for _ in 0..2 {
            for i in 0..j {
                let qi = a.column(i);
                let proj = qi.dot(&v);
                v.axpy(-proj, &qi, 1.0);
            }
        }
        let norm = v.norm();
        if norm > 1e-6 {
            a.set_column(j, &(v / norm));
            continue;
        }
        let mut best: Option<(f64, DVector<f64>)> = None;
        for e in 0..m {
            let mut cand = DVector::zeros(m);
            cand[e] = 1.0;
            for _ in 0..2 {
                for i in 0..j {
                    let qi = a.column(i);
                    let proj = qi.dot(&cand);
                    cand.axpy(-proj, &qi, 1.0);
                }
            }
            let nrm = cand.norm();
            if best.as_ref().is_none_or(|(b, _)| nrm > *b) {
                best = Some((nrm, cand));
            }
        }
        let (nrm, cand) = best.expect("m >= 1");
        a.set_column(j, &(cand / nrm));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{center_columns, orthonormality_error};

    /// Cyclic Jacobi rotations on a small symmetric matrix; an independent eigensolver.
    fn jacobi_eigen(mut a: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
        let n = a.nrows();
        let mut v = DMatrix::identity(n, n);
        for _sweep in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[(i, j)].powi(2))
                .sum();
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    if a[(p, q)].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    let mut rot = DMatrix::identity(n, n);
                    rot[(p, p)] = c;
                    rot[(q, q)] = c;
                    rot[(p, q)] = s;
                    rot[(q, p)] = -s;
                    a = rot.transpose() * &a * &rot;
                    v = &v * &rot;
                }
            }
        }
        ((0..n).map(|i| a[(i, i)]).collect(), v)
    }

    #[test]
    fn one_dimensional_data() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 0.0]);
        let p = pca(&x, 1).unwrap();
        assert!((p.eigenvalues[0] - 2.0).abs() < 1e-12);
        assert!((p.components[(0, 0)] - 1.0).abs() < 1e-12);
        assert!(p.components[(1, 0)].abs() < 1e-12);
    }

    #[test]
    fn matches_jacobi_on_three_by_three() {
        let raw = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.5, 0.3, 4.0, -2.0, -1.7, 0.2, 3.3]);
        let (xc, _) = center_columns(&raw);
        let cov = xc.transpose() * &xc / 2.0;
        let (vals, vecs) = jacobi_eigen(cov);
        let mut order: Vec<usize> = (0..3).collect();
        order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
        // rank 2 after centring three points; compare the two non-trivial components
        let p = pca(&xc, 2).unwrap();
        for (slot, &idx) in order.iter().take(2).enumerate() {
            assert!((p.eigenvalues[slot] - vals[idx]).abs() < 1e-8);
            let mut oracle = vecs.column(idx).into_owned();
            canonical_sign(&mut oracle);
            assert!((p.components.column(slot) - oracle).amax() < 1e-8);
        }
    }

    #[test]
    fn wide_matrix_uses_kernel_route() {
        let x = DMatrix::from_fn(4, 9, |i, j| ((i * 7 + j * 3) % 5) as f64 - (j as f64) * 0.1 * i as f64);
        let (xc, _) = center_columns(&x);
        let p = pca(&xc, 4).unwrap();
        assert!(orthonormality_error(&p.components) < 1e-10);
        // rank <= 3 after centring 4 rows
        assert!(p.eigenvalues[3] < 1e-10);
        let rec = &p.scores * p.components.transpose();
        assert!((rec - &xc).norm() <= 1e-8 * xc.norm());

        let cov = xc.transpose() * &xc / 3.0;
        let eig = SymmetricEigen::new(cov);
        let top = eig.eigenvalues.iter().copied().fold(f64::MIN, f64::max);
        assert!((p.eigenvalues[0] - top).abs() < 1e-9 * top.max(1.0));
    }

    #[test]
    fn rejects_too_many_components() {
        let x = DMatrix::zeros(3, 2);
        assert_eq!(
            pca(&x, 3).unwrap_err(),
            LinalgError::DimensionTooLarge { requested: 3, max: 2 }
        );
    }

    #[test]
    fn zero_matrix_still_orthonormal() {
        let x = DMatrix::zeros(5, 3);
        let p = pca(&x, 3).unwrap();
        assert!(orthonormality_error(&p.components) < 1e-12);
        assert!(p.eigenvalues.iter().all(|&v| v == 0.0));
    }
}

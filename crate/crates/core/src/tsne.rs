//! Exact t-SNE on layer outputs, with PCA preprocessing and a fixed seed per run.
//!
//! The optimiser is the classic exact scheme: Gaussian input affinities
//! calibrated per point to a target perplexity, Student-t output kernel,
//! gradient descent with momentum, per-coordinate gains and early
//! exaggeration. Everything is O(N²) in time and memory.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::ingest::{Labels, LayerActivations};
use crate::linalg::{center_columns, pca};

const MAX_BISECTION_STEPS: usize = 200;
const ENTROPY_TOL: f64 = 1e-10;
const MIN_GAIN: f64 = 0.01;

#[derive(Debug, Error, PartialEq)]
pub enum TsneError {
    #[error("perplexity calibration failed for sample {sample:?}: reached perplexity {achieved} for target {target}")]
    CalibrationFailed {
        sample: Option<usize>,
        achieved: f64,
        target: f64,
    },
    #[error("objective diverged at iteration {iteration}; try a lower learning rate")]
    NonFinite { iteration: usize },
    #[error("invalid t-SNE parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TsneParams {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration_factor: f64,
    pub early_exaggeration_iters: usize,
    pub momentum_initial: f64,
    pub momentum_final: f64,
    pub momentum_switch_iter: usize,
    pub seed: u64,
    /// Inputs wider than this are reduced to this many principal components first.
    pub pca_dim: usize,
}

impl Default for TsneParams {
    fn default() -> Self {
        TsneParams {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            early_exaggeration_factor: 12.0,
            early_exaggeration_iters: 250,
            momentum_initial: 0.5,
            momentum_final: 0.8,
            momentum_switch_iter: 250,
            seed: 0,
            pca_dim: 50,
        }
    }
}

impl TsneParams {
    pub fn validate(&self, n: usize) -> Result<(), TsneError> {
        let bad = |msg: String| Err(TsneError::InvalidParams(msg));
        if n < 10 {
            return bad(format!("need at least 10 samples, got {n}"));
        }
        if !(self.perplexity > 1.0) || !(self.perplexity < n as f64 / 3.0) {
            return bad(format!("perplexity must lie in (1, N/3) = (1, {:.3}), got {}", n as f64 / 3.0, self.perplexity));
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning rate must be positive".into());
        }
        if !(self.early_exaggeration_factor >= 1.0) {
            return bad("early exaggeration factor must be >= 1".into());
        }
        if self.early_exaggeration_iters > self.iterations {
            return bad("early exaggeration cannot outlast the run".into());
        }
        for mom in [self.momentum_initial, self.momentum_final] {
            if !(0.0..1.0).contains(&mom) {
                return bad(format!("momentum {mom} outside [0, 1)"));
            }
        }
        if self.pca_dim == 0 {
            return bad("pca_dim must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct EmbeddingResult {
    /// N×2.
    #[serde(skip)]
    pub coords: DMatrix<f64>,
    pub params: TsneParams,
    pub kl_divergence_final: f64,
    /// KL divergence after every iteration; empty unless tracing was requested.
    pub kl_trace: Vec<f64>,
}

/// Centres `x` and, when it has more than `pca_dim` columns, keeps its top `pca_dim` PC scores.
pub fn pca_reduce_for_tsne(x: &DMatrix<f64>, pca_dim: usize) -> DMatrix<f64> {
    let (xc, _) = center_columns(x);
    if x.ncols() <= pca_dim {
        return xc;
    }
    let d = pca_dim.min(x.nrows());
    pca(&xc, d).expect("d <= min(n, m)").scores
}

/// Row `p_{j|i}` of conditional affinities from squared distances to the other points.
///
/// Bisects the precision β until the row's perplexity `exp(H)` (equivalently
/// `2^H` with H in bits) matches the target.
pub fn perplexity_calibration(sq_dists: &[f64], perplexity: f64) -> Result<Vec<f64>, TsneError> {
    let n = sq_dists.len();
    let fail = |achieved: f64| TsneError::CalibrationFailed {
        sample: None,
        achieved,
        target: perplexity,
    };
    if n == 0 {
        return Err(fail(0.0));
    }
    let dmin = sq_dists.iter().copied().fold(f64::INFINITY, f64::min);
    let shifted: Vec<f64> = sq_dists.iter().map(|d| d - dmin).collect();
    let spread = shifted.iter().copied().fold(0.0, f64::max);
    let target = perplexity.ln();
    if target > (n as f64).ln() + 1e-12 {
        return Err(fail(n as f64));
    }
    if spread == 0.0 {
        return Ok(vec![1.0 / n as f64; n]);
    }

    let eval = |beta: f64, out: &mut Vec<f64>| -> f64 {
        out.clear();
        out.extend(shifted.iter().map(|&d| (-beta * d).exp()));
        let z: f64 = out.iter().sum();
        let weighted: f64 = shifted.iter().zip(out.iter()).map(|(d, w)| d * w).sum();
        out.iter_mut().for_each(|w| *w /= z);
        z.ln() + beta * weighted / z
    };

    let mut row = Vec::with_capacity(n);
    let mut beta = n as f64 / shifted.iter().sum::<f64>();
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    let mut entropy = f64::NAN;
    for _ in 0..MAX_BISECTION_STEPS {
        entropy = eval(beta, &mut row);
        let diff = entropy - target;
        if diff.abs() <= ENTROPY_TOL {
            return Ok(row);
        }
        if diff > 0.0 {
            lo = beta;
            beta = if hi.is_finite() { 0.5 * (beta + hi) } else { beta * 2.0 };
        } else {
            hi = beta;
            beta = 0.5 * (beta + lo);
        }
    }
    Err(fail(entropy.exp()))
}

fn squared_distances(data: &DMatrix<f64>) -> Vec<Vec<f64>> {
    let n = data.nrows();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| data.row(i).iter().copied().collect()).collect();
    (0..n)
        .into_par_iter()
        .map(|i| {
            rows.iter()
                .map(|r| r.iter().zip(&rows[i]).map(|(a, b)| (a - b) * (a - b)).sum())
                .collect()
        })
        .collect()
}

/// Symmetrised affinities `P = (P_{j|i} + P_{i|j}) / 2N`, zero diagonal.
pub fn joint_probabilities(data: &DMatrix<f64>, perplexity: f64) -> Result<DMatrix<f64>, TsneError> {
    let n = data.nrows();
    let dist = squared_distances(data);
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let others: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| dist[i][j]).collect();
            perplexity_calibration(&others, perplexity).map_err(|e| match e {
                TsneError::CalibrationFailed { achieved, target, .. } => TsneError::CalibrationFailed {
                    sample: Some(i),
                    achieved,
                    target,
                },
                other => other,
            })
        })
        .collect::<Result<_, _>>()?;
    let mut cond = DMatrix::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        let mut it = row.iter();
        for j in (0..n).filter(|&j| j != i) {
            cond[(i, j)] = *it.next().unwrap();
        }
    }
    let denom = 2.0 * n as f64;
    Ok(DMatrix::from_fn(n, n, |i, j| (cond[(i, j)] + cond[(j, i)]) / denom))
}

/// KL(P‖Q) for an N×2 embedding, with Q the normalised Student-t kernel.
pub fn kl_divergence(p: &DMatrix<f64>, coords: &DMatrix<f64>) -> f64 {
    let n = coords.nrows();
    let rows: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (mut z, mut cross) = (0.0, 0.0);
            for j in 0..n {
                if j == i {
                    continue;
                }
                let w = 1.0 / (1.0 + sq_dist2(coords, i, j));
                z += w;
                let pij = p[(i, j)];
                if pij > 0.0 {
                    cross += pij * (pij.ln() - w.ln());
                }
            }
            (z, cross)
        })
        .collect();
    let z: f64 = rows.iter().map(|r| r.0).sum();
    let cross: f64 = rows.iter().map(|r| r.1).sum();
    let mass: f64 = p.iter().sum();
    cross + mass * z.ln()
}

#[inline]
fn sq_dist2(y: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    let dx = y[(i, 0)] - y[(j, 0)];
    let dy = y[(i, 1)] - y[(j, 1)];
    dx * dx + dy * dy
}

/// Initial layout: isotropic Gaussian scaled by 1e-4, drawn row by row from the seed.
pub fn initial_layout(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut y = DMatrix::zeros(n, 2);
    for i in 0..n {
        for d in 0..2 {
            y[(i, d)] = 1e-4 * rng.sample::<f64, _>(StandardNormal);
        }
    }
    y
}

pub fn tsne_embed(x: &LayerActivations, params: &TsneParams) -> Result<EmbeddingResult, TsneError> {
    run(&x.values, params, false)
}

/// Like [`tsne_embed`] but records the KL divergence after every iteration.
pub fn tsne_embed_traced(x: &LayerActivations, params: &TsneParams) -> Result<EmbeddingResult, TsneError> {
    run(&x.values, params, true)
}

fn run(x: &DMatrix<f64>, params: &TsneParams, trace: bool) -> Result<EmbeddingResult, TsneError> {
    let n = x.nrows();
    params.validate(n)?;
    let data = pca_reduce_for_tsne(x, params.pca_dim);
    let p = joint_probabilities(&data, params.perplexity)?;

    let mut y = initial_layout(n, params.seed);
    let mut update = DMatrix::<f64>::zeros(n, 2);
    let mut gains = DMatrix::<f64>::from_element(n, 2, 1.0);
    let mut kl_trace = Vec::new();

    for iter in 0..params.iterations {
        let exaggeration = if iter < params.early_exaggeration_iters {
            params.early_exaggeration_factor
        } else {
            1.0
        };
        let momentum = if iter < params.momentum_switch_iter {
            params.momentum_initial
        } else {
            params.momentum_final
        };

        let row_z: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| (0..n).filter(|&j| j != i).map(|j| 1.0 / (1.0 + sq_dist2(&y, i, j))).sum())
            .collect();
        let z: f64 = row_z.iter().sum();
        let grads: Vec<[f64; 2]> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut g = [0.0; 2];
                for j in 0..n {
                    if j == i {
                        continue;
                    }
                    let w = 1.0 / (1.0 + sq_dist2(&y, i, j));
                    let coef = (exaggeration * p[(i, j)] - w / z) * w;
                    g[0] += coef * (y[(i, 0)] - y[(j, 0)]);
                    g[1] += coef * (y[(i, 1)] - y[(j, 1)]);
                }
                [4.0 * g[0], 4.0 * g[1]]
            })
            .collect();

        for (i, g) in grads.iter().enumerate() {
            for d in 0..2 {
                let same_direction = (g[d] > 0.0) == (update[(i, d)] > 0.0);
                let gain = if same_direction { gains[(i, d)] * 0.8 } else { gains[(i, d)] + 0.2 };
                gains[(i, d)] = gain.max(MIN_GAIN);
                update[(i, d)] = momentum * update[(i, d)] - params.learning_rate * gains[(i, d)] * g[d];
                y[(i, d)] += update[(i, d)];
            }
        }
        for d in 0..2 {
            let mean = y.column(d).iter().sum::<f64>() / n as f64;
            y.column_mut(d).iter_mut().for_each(|v| *v -= mean);
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(TsneError::NonFinite { iteration: iter });
        }
        if trace {
            kl_trace.push(kl_divergence(&p, &y));
        }
    }

    let kl = kl_divergence(&p, &y);
    if !kl.is_finite() {
        return Err(TsneError::NonFinite {
            iteration: params.iterations,
        });
    }
    Ok(EmbeddingResult {
        coords: y,
        params: params.clone(),
        kl_divergence_final: kl.max(0.0),
        kl_trace,
    })
}

/// Fraction of points whose k nearest embedding neighbours (excluding themselves)
/// have the point's own label as a strict majority-vote winner. Ties count as impure.
pub fn knn_purity(coords: &DMatrix<f64>, y: &Labels, k_neighbors: usize) -> f64 {
    let n = coords.nrows();
    assert_eq!(n, y.len(), "one label per embedded point");
    assert!(k_neighbors >= 1 && n > k_neighbors, "need N > k >= 1");
    let labels = y.as_slice();
    let pure: usize = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut others: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let d: f64 = (0..coords.ncols()).map(|c| (coords[(i, c)] - coords[(j, c)]).powi(2)).sum();
                    (d, j)
                })
                .collect();
            others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut votes = vec![0usize; y.k()];
            for &(_, j) in others.iter().take(k_neighbors) {
                votes[labels[j]] += 1;
            }
            let own = votes[labels[i]];
            let strict = votes.iter().enumerate().all(|(c, &v)| c == labels[i] || v < own);
            usize::from(strict)
        })
        .sum();
    pure as f64 / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::synth_gaussian_clusters;

    fn entropy_perplexity(row: &[f64]) -> f64 {
        let bits: f64 = row.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.log2()).sum();
        2f64.powf(bits)
    }

    #[test]
    fn equal_distances_give_uniform_row() {
        let row = perplexity_calibration(&[4.0; 9], 5.0).unwrap();
        assert!(row.iter().all(|&p| (p - 1.0 / 9.0).abs() < 1e-15));
        let row = perplexity_calibration(&[4.0; 9], 9.0).unwrap();
        assert!(row.iter().all(|&p| (p - 1.0 / 9.0).abs() < 1e-15));
    }

    #[test]
    fn calibration_hits_target_perplexity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d: Vec<f64> = (0..199)
            .map(|_| {
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                a * a + b * b
            })
            .collect();
        let row = perplexity_calibration(&d, 30.0).unwrap();
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let achieved = entropy_perplexity(&row);
        assert!((achieved / 30.0 - 1.0).abs() < 1e-4, "achieved {achieved}");
    }

    #[test]
    fn unreachable_perplexity_fails() {
        // N = 10 points → 9 distances; perplexity 10 ≥ N
        let d: Vec<f64> = (1..=9).map(|i| i as f64).collect();
        assert!(matches!(
            perplexity_calibration(&d, 10.0),
            Err(TsneError::CalibrationFailed { .. })
        ));
    }

    #[test]
    fn joint_probabilities_are_symmetric_and_normalised() {
        let g = synth_gaussian_clusters(3, 20, 4, 3.0, 1.0, 1).unwrap();
        let p = joint_probabilities(&g.activations.values, 8.0).unwrap();
        assert!((p.sum() - 1.0).abs() < 1e-9);
        assert!(p.iter().all(|&v| v >= 0.0));
        assert_eq!(p, p.transpose());
        assert!((0..60).all(|i| p[(i, i)] == 0.0));
    }

    #[test]
    fn reduction_keeps_narrow_inputs() {
        let x = DMatrix::from_fn(20, 10, |i, j| ((i * 31 + j * 17) % 13) as f64);
        assert_eq!(pca_reduce_for_tsne(&x, 50).ncols(), 10);
    }

    #[test]
    fn reduction_of_wide_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = DMatrix::from_fn(80, 512, |_, _| rng.sample::<f64, _>(StandardNormal));
        let r = pca_reduce_for_tsne(&x, 50);
        assert_eq!(r.ncols(), 50);
        let var = |j: usize| r.column(j).iter().map(|v| v * v).sum::<f64>();
        for j in 1..50 {
            assert!(var(j) <= var(j - 1) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn reduction_of_low_rank_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let basis = DMatrix::from_fn(3, 100, |_, _| rng.sample::<f64, _>(StandardNormal));
        let coef = DMatrix::from_fn(60, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let r = pca_reduce_for_tsne(&(coef * basis), 50);
        assert_eq!(r.ncols(), 50);
        for j in 3..50 {
            let var = r.column(j).iter().map(|v| v * v).sum::<f64>() / 59.0;
            assert!(var <= 1e-10, "column {j} variance {var}");
        }
    }

    #[test]
    fn params_validation() {
        let p = TsneParams::default();
        assert!(p.validate(9).is_err());
        assert!(p.validate(60).is_err()); // 30 >= 60/3
        assert!(p.validate(91).is_ok());
        let bad = TsneParams {
            early_exaggeration_iters: 2000,
            ..TsneParams::default()
        };
        assert!(bad.validate(1000).is_err());
    }

    #[test]
    fn purity_edge_cases() {
        let coords = DMatrix::from_fn(6, 2, |i, d| if d == 0 { i as f64 } else { 0.0 });
        let same = Labels::new(vec![1; 6], 2).unwrap();
        assert_eq!(knn_purity(&coords, &same, 2), 1.0);
        let split = Labels::new(vec![0, 0, 0, 1, 1, 1], 2).unwrap();
        let far = DMatrix::from_fn(6, 2, |i, d| if d == 0 { i as f64 + if i >= 3 { 100.0 } else { 0.0 } } else { 0.0 });
        assert_eq!(knn_purity(&far, &split, 2), 1.0);
        // 1-D chain 0 0 0 1 1 1 with k=2: point 2 sees {1,3} → tie → impure
        assert!((knn_purity(&coords, &split, 2) - 4.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn random_labels_have_low_purity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let coords = DMatrix::from_fn(1000, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = Labels::new((0..1000).map(|_| rng.random_range(0..10)).collect(), 10).unwrap();
        let purity = knn_purity(&coords, &y, 10);
        assert!(purity <= 0.2, "purity {purity}");
    }

    #[test]
    fn kl_is_rotation_invariant() {
        let g = synth_gaussian_clusters(2, 15, 3, 4.0, 1.0, 6).unwrap();
        let p = joint_probabilities(&g.activations.values, 5.0).unwrap();
        let y = initial_layout(30, 1) * 1e4;
        let (s, c) = 0.7f64.sin_cos();
        let rot = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        let a = kl_divergence(&p, &y);
        let b = kl_divergence(&p, &(&y * rot));
        assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
        assert!(a >= 0.0);
    }

    #[test]
    fn embedding_is_deterministic_and_centred() {
        let g = synth_gaussian_clusters(2, 20, 4, 10.0, 1.0, 3).unwrap();
        let params = TsneParams {
            perplexity: 5.0,
            iterations: 120,
            early_exaggeration_iters: 50,
            momentum_switch_iter: 50,
            seed: 9,
            ..TsneParams::default()
        };
        let a = tsne_embed(&g.activations, &params).unwrap();
        let b = tsne_embed(&g.activations, &params).unwrap();
        assert_eq!(a.coords, b.coords);
        for d in 0..2 {
            let mean = a.coords.column(d).iter().sum::<f64>() / 40.0;
            assert!(mean.abs() <= 1e-9);
        }
        assert!(a.kl_divergence_final >= 0.0);
    }

    #[test]
    fn kl_decreases_after_exaggeration() {
        // default schedule: 1000 iterations, exaggeration and low momentum for the first 250
        let g = synth_gaussian_clusters(3, 100, 6, 6.0, 1.0, 12).unwrap();
        let params = TsneParams::default();
        let r = tsne_embed_traced(&g.activations, &params).unwrap();
        let tail = &r.kl_trace[params.early_exaggeration_iters..];
        let steps = tail.len() - 1;
        let non_increasing = tail.windows(2).filter(|w| w[1] <= w[0]).count();
        assert!(
            non_increasing as f64 >= 0.95 * steps as f64,
            "{non_increasing}/{steps} non-increasing steps"
        );
        assert!((r.kl_trace.last().unwrap() - r.kl_divergence_final).abs() < 1e-12);
    }
}

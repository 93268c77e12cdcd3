//! Deterministic synthetic fixtures.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{IngestError, Labels, LayerActivations};

/// Arc parameter range of the Swiss roll, `t ∈ [1.5π, 4.5π]`.
pub const SWISS_ROLL_T_RANGE: (f64, f64) = (1.5 * PI, 4.5 * PI);
/// Height range of the Swiss roll, `h ∈ [0, 21]`.
pub const SWISS_ROLL_HEIGHT: f64 = 21.0;

/// Output of [`synth_gaussian_clusters`].
#[derive(Debug, Clone)]
pub struct GaussianClusters {
    pub activations: LayerActivations,
    pub labels: Labels,
    /// Planted unit axis `d_c` per class.
    pub axes: Vec<DVector<f64>>,
    /// Population mean per class, `separation · e_c`.
    pub means: Vec<DVector<f64>>,
}

/// `k` Gaussian classes in `m` dimensions, `n_per` samples each, rows grouped by class.
///
/// Class `c` is centred at `separation · e_c`. Its covariance is the identity
/// except along a random unit axis `d_c`, where the standard deviation is
/// `anisotropy`. Axes are drawn first, then samples, from one ChaCha8 stream.
pub fn synth_gaussian_clusters(
    k: usize,
    n_per: usize,
    m: usize,
    separation: f64,
    anisotropy: f64,
    seed: u64,
) -> Result<GaussianClusters, IngestError> {
    if m < k {
        return Err(IngestError::InvalidShape(format!("need m >= k, got m={m}, k={k}")));
    }
    if k < 2 || n_per == 0 {
        return Err(IngestError::InvalidShape(format!("need k >= 2 and n_per >= 1, got k={k}, n_per={n_per}")));
    }
    if !(separation >= 0.0 && separation.is_finite()) || !(anisotropy > 0.0 && anisotropy.is_finite()) {
        return Err(IngestError::InvalidShape("separation must be >= 0 and anisotropy > 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let axes: Vec<DVector<f64>> = (0..k)
        .map(|_| loop {
            let v = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
            let norm = v.norm();
            if norm > 1e-8 {
                break v / norm;
            }
        })
        .collect();
    let means: Vec<DVector<f64>> = (0..k)
        .map(|c| {
            let mut mu = DVector::zeros(m);
            mu[c] = separation;
            mu
        })
        .collect();

    let n = k * n_per;
    let mut values = DMatrix::zeros(n, m);
    let mut y = Vec::with_capacity(n);
    for c in 0..k {
        for s in 0..n_per {
            let row = c * n_per + s;
            let z = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
            let stretch = (anisotropy - 1.0) * axes[c].dot(&z);
            for j in 0..m {
                values[(row, j)] = means[c][j] + z[j] + stretch * axes[c][j];
            }
            y.push(c);
        }
    }
    Ok(GaussianClusters {
        activations: LayerActivations::new("synthetic", values)?,
        labels: Labels::new(y, k)?,
        axes,
        means,
    })
}

/// Output of [`synth_swiss_roll`].
#[derive(Debug, Clone)]
pub struct SwissRoll {
    /// Columns `(t cos t, h, t sin t)` plus noise.
    pub activations: LayerActivations,
    /// Generating arc parameter per row.
    pub t: Vec<f64>,
    /// Generating height per row.
    pub h: Vec<f64>,
}

/// Swiss roll with `t ~ U[1.5π, 4.5π]`, `h ~ U[0, 21]`, isotropic Gaussian noise.
pub fn synth_swiss_roll(n: usize, noise: f64, seed: u64) -> Result<SwissRoll, IngestError> {
    if n == 0 {
        return Err(IngestError::InvalidShape("swiss roll needs n >= 1".into()));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(IngestError::InvalidShape("noise must be finite and >= 0".into()));
    }
    let (t_lo, t_hi) = SWISS_ROLL_T_RANGE;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = DMatrix::zeros(n, 3);
    let mut ts = Vec::with_capacity(n);
    let mut hs = Vec::with_capacity(n);
    for i in 0..n {
        let t = t_lo + (t_hi - t_lo) * rng.random::<f64>();
        let h = SWISS_ROLL_HEIGHT * rng.random::<f64>();
        let point = [t * t.cos(), h, t * t.sin()];
        for (j, p) in point.iter().enumerate() {
            let eps = if noise > 0.0 {
                noise * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            values[(i, j)] = p + eps;
        }
        ts.push(t);
        hs.push(h);
    }
    Ok(SwissRoll {
        activations: LayerActivations::new("swiss_roll", values)?,
        t: ts,
        h: hs,
    })
}

//! Kernel-density mode counting, used to flag bimodal typicality histograms.

/// Local maxima lower than this fraction of the tallest peak are ignored.
pub const MIN_MODE_HEIGHT_FRACTION: f64 = 0.05;
const GRID_POINTS: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct KdeModes {
    pub bandwidth: f64,
    /// Locations of the retained density peaks, ascending.
    pub modes: Vec<f64>,
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
}

impl KdeModes {
    pub fn count(&self) -> usize {
        self.modes.len()
    }
}

/// Silverman's rule of thumb: `0.9 · min(σ, IQR/1.34) · n^(-1/5)`.
pub fn silverman_bandwidth(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * n.powf(-0.2)
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Gaussian KDE at Silverman bandwidth on a 512-point grid spanning `[min − 3h, max + 3h]`.
pub fn kde_modes(values: &[f64]) -> Option<KdeModes> {
    if values.len() < 2 {
        return None;
    }
    let h = silverman_bandwidth(values);
    if !(h > 0.0) {
        return None;
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min) - 3.0 * h;
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * h;
    let step = (hi - lo) / (GRID_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..GRID_POINTS).map(|i| lo + step * i as f64).collect();
    let norm = 1.0 / (values.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let density: Vec<f64> = grid
        .iter()
        .map(|&g| norm * values.iter().map(|&v| (-0.5 * ((g - v) / h).powi(2)).exp()).sum::<f64>())
        .collect();

    let peak = density.iter().copied().fold(0.0, f64::max);
    let mut modes = Vec::new();
    let mut i = 1;
    while i + 1 < density.len() {
        if density[i] > density[i - 1] {
            // walk across a plateau
            let mut j = i;
            while j + 1 < density.len() && density[j + 1] == density[i] {
                j += 1;
            }
            if j + 1 < density.len() && density[j + 1] < density[i] && density[i] >= MIN_MODE_HEIGHT_FRACTION * peak {
                modes.push(0.5 * (grid[i] + grid[j]));
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    Some(KdeModes {
        bandwidth: h,
        modes,
        grid,
        density,
    })
}

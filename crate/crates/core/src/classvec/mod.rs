//! Class-specific projection vectors θ_k, pair plots, typicality scores and
//! extreme-example rankings.
//!
//! Every class gets one unit direction in activation space. Three recipes are
//! offered ([`Variant`]); all of them work on globally centred activations
//! `X − 1x̄ᵀ`, and the global mean x̄ is kept so that held-out data can be
//! projected with the training statistics.

mod modes;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::ingest::{Labels, LayerActivations};
use crate::linalg::{canonical_sign, center_columns, leading_direction, subtract_row};

pub use modes::{kde_modes, silverman_bandwidth, KdeModes, MIN_MODE_HEIGHT_FRACTION};

/// Dot products `|(x̄_k − x̄)ᵀθ_k|` at or below this are treated as sign ties.
pub const SIGN_TIE_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum ClassVecError {
    #[error("class {0} has no samples")]
    EmptyClass(usize),
    #[error("class {class} has {have} samples, need at least {need}")]
    TooFewSamples { class: usize, have: usize, need: usize },
    #[error("class {0} is degenerate: its direction cannot be normalised")]
    DegenerateClass(usize),
    #[error("class vectors must be sign-fixed first")]
    SignsNotFixed,
    #[error("pair plot needs two different classes, got {0} twice")]
    SameClass(usize),
    #[error("class {class} out of range for {k} classes")]
    ClassOutOfRange { class: usize, k: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("projections onto class {class} have zero variance")]
    ZeroVariance { class: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Direction of the class mean.
    Mean,
    /// Top eigenvector of the (uncentred within class) second-moment matrix.
    SecondMoment,
    /// First principal component of the class after recentring it.
    #[default]
    WithinClassPc1,
}

impl Variant {
    fn min_samples(self) -> usize {
        match self {
            Variant::Mean => 1,
            _ => 2,
        }
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(Variant::Mean),
            "m2" | "second_moment" => Ok(Variant::SecondMoment),
            "pc1" | "within_class_pc1" => Ok(Variant::WithinClassPc1),
            other => Err(format!("unknown variant {other:?} (expected mean, m2 or pc1)")),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Mean => "mean",
            Variant::SecondMoment => "m2",
            Variant::WithinClassPc1 => "pc1",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassVectorSet {
    /// M×K, unit columns θ_k.
    pub theta: DMatrix<f64>,
    /// Uncentred class means x̄_k.
    pub class_means: Vec<DVector<f64>>,
    pub global_mean: DVector<f64>,
    pub variant: Variant,
    pub sign_fixed: bool,
    /// Classes whose sign could not be decided by [`fix_signs`].
    pub ambiguous: Vec<usize>,
}

impl ClassVectorSet {
    pub fn k(&self) -> usize {
        self.theta.ncols()
    }

    pub fn m(&self) -> usize {
        self.theta.nrows()
    }

    pub fn theta_k(&self, k: usize) -> DVector<f64> {
        self.theta.column(k).into_owned()
    }

    /// `(x̄_k − x̄)ᵀθ_k`; positive once signs are fixed.
    pub fn sign_margin(&self, k: usize) -> f64 {
        (&self.class_means[k] - &self.global_mean).dot(&self.theta.column(k))
    }

    fn check_class(&self, class: usize) -> Result<(), ClassVecError> {
        if class >= self.k() {
            return Err(ClassVecError::ClassOutOfRange { class, k: self.k() });
        }
        Ok(())
    }

    fn check_dim(&self, x: &LayerActivations) -> Result<(), ClassVecError> {
        if x.m() != self.m() {
            return Err(ClassVecError::DimensionMismatch {
                expected: self.m(),
                found: x.m(),
            });
        }
        Ok(())
    }

    /// Cosines between every pair of class vectors.
    pub fn cosine_matrix(&self) -> DMatrix<f64> {
        self.theta.transpose() * &self.theta
    }
}

fn mean_of_rows(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.nrows() as f64;
    DVector::from_fn(x.ncols(), |j, _| x.column(j).iter().sum::<f64>() / n)
}

/// Computes θ_k for every class. `x` is the raw layer output.
///
/// The result is not sign-fixed yet; each θ_k carries the deterministic
/// largest-entry-positive sign until [`fix_signs`] runs.
pub fn class_vectors(x: &LayerActivations, y: &Labels, variant: Variant) -> Result<ClassVectorSet, ClassVecError> {
    if y.len() != x.n() {
        return Err(ClassVecError::DimensionMismatch {
            expected: x.n(),
            found: y.len(),
        });
    }
    let (xc, global_mean) = center_columns(&x.values);
    let scale = x.values.amax().max(f64::MIN_POSITIVE);
    let k = y.k();
    let m = x.m();

    let mut theta = DMatrix::zeros(m, k);
    let mut class_means = Vec::with_capacity(k);
    for (class, rows) in (0..k).map(|c| (c, y.indices_of(c))) {
        if rows.is_empty() {
            return Err(ClassVecError::EmptyClass(class));
        }
        if rows.len() < variant.min_samples() {
            return Err(ClassVecError::TooFewSamples {
                class,
                have: rows.len(),
                need: variant.min_samples(),
            });
        }
        let xk = xc.select_rows(&rows);
        let offset = mean_of_rows(&xk);
        class_means.push(&global_mean + &offset);

        let direction = match variant {
            Variant::Mean => {
                let norm = offset.norm();
                (norm > 1e-12 * scale).then(|| offset / norm)
            }
            Variant::SecondMoment => {
                if xk.amax() <= 1e-12 * scale {
                    None
                } else {
                    leading_direction(&xk).map(|(v, _)| v)
                }
            }
            Variant::WithinClassPc1 => {
                let (xkc, _) = center_columns(&xk);
                if xkc.amax() <= 1e-12 * scale {
                    None
                } else {
                    leading_direction(&xkc).map(|(v, _)| v)
                }
            }
        };
        let mut v = direction.ok_or(ClassVecError::DegenerateClass(class))?;
        canonical_sign(&mut v);
        theta.set_column(class, &v);
    }

    Ok(ClassVectorSet {
        theta,
        class_means,
        global_mean,
        variant,
        sign_fixed: false,
        ambiguous: Vec::new(),
    })
}

/// Orients every θ_k so that `(x̄_k − x̄)ᵀθ_k > 0`.
///
/// Exact ties are not an error: the class is listed in `ambiguous`, its sign
/// is left as computed, and a warning is logged. Idempotent.
pub fn fix_signs(mut cvs: ClassVectorSet) -> ClassVectorSet {
    cvs.ambiguous.clear();
    for k in 0..cvs.k() {
        let margin = cvs.sign_margin(k);
        if margin.abs() <= SIGN_TIE_TOL {
            log::warn!("class {k}: sign of class vector is ambiguous (margin {margin:e})");
            cvs.ambiguous.push(k);
        } else if margin < 0.0 {
            cvs.theta.column_mut(k).neg_mut();
        }
    }
    cvs.sign_fixed = true;
    cvs
}

/// `(X − 1x̄ᵀ)Θ` using the stored (training) global mean; N×K.
pub fn centered_projection(x: &LayerActivations, cvs: &ClassVectorSet) -> Result<DMatrix<f64>, ClassVecError> {
    cvs.check_dim(x)?;
    Ok(subtract_row(&x.values, &cvs.global_mean) * &cvs.theta)
}

/// Coordinates `((X − 1x̄ᵀ)θ_j, (X − 1x̄ᵀ)θ_k)` for a class-pair scatter plot.
///
/// The two axes are generally not orthogonal, so this is an oblique projection.
pub fn pairplot_coords(
    x: &LayerActivations,
    cvs: &ClassVectorSet,
    j: usize,
    k: usize,
) -> Result<DMatrix<f64>, ClassVecError> {
    if !cvs.sign_fixed {
        return Err(ClassVecError::SignsNotFixed);
    }
    cvs.check_class(j)?;
    cvs.check_class(k)?;
    if j == k {
        return Err(ClassVecError::SameClass(j));
    }
    cvs.check_dim(x)?;
    let xc = subtract_row(&x.values, &cvs.global_mean);
    let mut out = DMatrix::zeros(x.n(), 2);
    out.set_column(0, &(&xc * cvs.theta.column(j)));
    out.set_column(1, &(&xc * cvs.theta.column(k)));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TypicalityScores {
    pub class_id: usize,
    /// `(x_i − x̄)ᵀθ_k` for every sample.
    pub raw: Vec<f64>,
    /// `raw` standardised to mean 0, variance 1 over all N samples.
    pub scores: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation of `raw`.
    pub std: f64,
    /// Whether sample i belongs to class k.
    pub member: Vec<bool>,
}

impl TypicalityScores {
    pub fn class_scores(&self) -> Vec<f64> {
        self.scores
            .iter()
            .zip(&self.member)
            .filter(|(_, &m)| m)
            .map(|(&s, _)| s)
            .collect()
    }
}

pub fn typicality_scores(
    x: &LayerActivations,
    y: &Labels,
    cvs: &ClassVectorSet,
    k: usize,
) -> Result<TypicalityScores, ClassVecError> {
    if !cvs.sign_fixed {
        return Err(ClassVecError::SignsNotFixed);
    }
    cvs.check_class(k)?;
    cvs.check_dim(x)?;
    if y.len() != x.n() {
        return Err(ClassVecError::DimensionMismatch {
            expected: x.n(),
            found: y.len(),
        });
    }
    let proj = subtract_row(&x.values, &cvs.global_mean) * cvs.theta.column(k);
    let raw: Vec<f64> = proj.iter().copied().collect();
    let n = raw.len() as f64;
    let mean = raw.iter().sum::<f64>() / n;
    let var = raw.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    let spread = raw.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if !(std > 1e-12 * spread.max(f64::MIN_POSITIVE)) {
        return Err(ClassVecError::ZeroVariance { class: k });
    }
    let mut scores: Vec<f64> = raw.iter().map(|v| (v - mean) / std).collect();
    // one centring pass on the standardised values removes rounding drift
    let drift = scores.iter().sum::<f64>() / n;
    scores.iter_mut().for_each(|s| *s -= drift);
    Ok(TypicalityScores {
        class_id: k,
        raw,
        scores,
        mean,
        std,
        member: y.as_slice().iter().map(|&c| c == k).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extremes {
    /// Highest class-k scores, descending.
    pub top: Vec<usize>,
    /// Lowest class-k scores, ascending.
    pub bottom: Vec<usize>,
}

/// The `count` most and least typical members of class `k`. Ties go to the lower sample index.
pub fn rank_extremes(
    scores: &TypicalityScores,
    y: &Labels,
    k: usize,
    count: usize,
) -> Result<Extremes, ClassVecError> {
    if y.len() != scores.scores.len() {
        return Err(ClassVecError::DimensionMismatch {
            expected: scores.scores.len(),
            found: y.len(),
        });
    }
    if k >= y.k() {
        return Err(ClassVecError::ClassOutOfRange { class: k, k: y.k() });
    }
    let members = y.indices_of(k);
    if members.len() < 2 * count {
        return Err(ClassVecError::TooFewSamples {
            class: k,
            have: members.len(),
            need: 2 * count,
        });
    }
    let s = &scores.scores;
    let mut desc = members.clone();
    desc.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
    let mut asc = members;
    asc.sort_by(|&a, &b| s[a].total_cmp(&s[b]).then(a.cmp(&b)));
    desc.truncate(count);
    asc.truncate(count);
    Ok(Extremes { top: desc, bottom: asc })
}

#[cfg(test)]
mod tests;

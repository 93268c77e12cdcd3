//! Linear probes: a softmax layer refit on one layer's activations.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{DatasetManifest, IngestError, LayerActivations, Labels};
use crate::output::{fmt_f64, CsvDoc};

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("feature dimension mismatch: model has {expected}, input has {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("length mismatch: {predictions} predictions for {labels} labels")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("the training subset contains only class {0}")]
    SingleClassSubset(usize),
    #[error("subset size {requested} is not in 1..={available}")]
    InvalidSubset { requested: usize, available: usize },
    #[error("prediction {prediction} out of range for {k} classes")]
    PredictionOutOfRange { prediction: usize, k: usize },
    #[error("confusion counts must form a non-empty square table")]
    NotSquare,
    #[error("train and test manifests differ: {0}")]
    ManifestMismatch(String),
    #[error("invalid hyperparameters: {0}")]
    InvalidHyper(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("{}", describe_failures(.0))]
    LayerFailures(Vec<LayerFailure>),
}

#[derive(Debug)]
pub struct LayerFailure {
    pub layer_id: String,
    pub error: ProbeError,
}

fn describe_failures(f: &[LayerFailure]) -> String {
    let parts: Vec<String> = f.iter().map(|e| format!("layer {}: {}", e.layer_id, e.error)).collect();
    format!("{} layer(s) failed; {}", f.len(), parts.join("; "))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeHyper {
    /// L2 penalty on the weights; the bias is not penalised.
    pub lambda: f64,
    pub max_epochs: usize,
    pub grad_tol: f64,
    /// Sufficient-decrease constant of the backtracking line search.
    pub armijo: f64,
}

impl Default for ProbeHyper {
    fn default() -> Self {
        ProbeHyper {
            lambda: 1e-4,
            max_epochs: 500,
            grad_tol: 1e-5,
            armijo: 1e-4,
        }
    }
}

impl ProbeHyper {
    fn validate(&self) -> Result<(), ProbeError> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(ProbeError::InvalidHyper(format!("lambda {}", self.lambda)));
        }
        if !(self.grad_tol > 0.0) || !(self.armijo > 0.0 && self.armijo < 1.0) {
            return Err(ProbeError::InvalidHyper("grad_tol and armijo must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub subset_size: usize,
    pub n_available: usize,
    pub seed: u64,
    pub hyper: ProbeHyper,
    pub solver: String,
    pub converged: bool,
    pub epochs: usize,
    pub final_loss: f64,
    pub initial_loss: f64,
    pub final_grad_norm: f64,
}

/// Softmax classifier on standardised features.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeModel {
    /// M×K, acting on standardised features.
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub feature_mean: DVector<f64>,
    /// Per-column standard deviation of the training subset; 1 for constant columns.
    pub feature_scale: DVector<f64>,
    pub meta: TrainingMeta,
}

impl ProbeModel {
    pub fn m(&self) -> usize {
        self.weights.nrows()
    }

    pub fn k(&self) -> usize {
        self.weights.ncols()
    }

    fn check(&self, x: &LayerActivations) -> Result<(), ProbeError> {
        if x.m() != self.m() {
            return Err(ProbeError::DimensionMismatch {
                expected: self.m(),
                found: x.m(),
            });
        }
        Ok(())
    }

    fn logits(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let z = standardize(x, &self.feature_mean, &self.feature_scale);
        add_bias(z * &self.weights, &self.bias)
    }

    /// N×K class probabilities.
    pub fn predict_proba(&self, x: &LayerActivations) -> Result<DMatrix<f64>, ProbeError> {
        self.check(x)?;
        let mut p = self.logits(&x.values);
        softmax_rows(&mut p);
        Ok(p)
    }

    /// Most probable class per row, ties to the lowest index.
    pub fn predict(&self, x: &LayerActivations) -> Result<Vec<usize>, ProbeError> {
        self.check(x)?;
        let z = self.logits(&x.values);
        Ok(z.row_iter().map(|r| argmax(r.iter().copied())).collect())
    }
}

fn argmax(it: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in it.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

fn standardize(x: &DMatrix<f64>, mean: &DVector<f64>, scale: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - mean[j]) / scale[j])
}

fn add_bias(mut z: DMatrix<f64>, b: &DVector<f64>) -> DMatrix<f64> {
    for mut row in z.row_iter_mut() {
        row += b.transpose();
    }
    z
}

fn softmax_rows(z: &mut DMatrix<f64>) {
    for mut row in z.row_iter_mut() {
        let mx = row.max();
        row.apply(|v| *v = (*v - mx).exp());
        let s = row.sum();
        row /= s;
    }
}

/// Mean cross-entropy plus `λ/2·‖W‖²`, with its gradient, on standardised
/// features `z` (N×M).
pub fn loss_and_gradient(
    z: &DMatrix<f64>,
    y: &[usize],
    weights: &DMatrix<f64>,
    bias: &DVector<f64>,
    lambda: f64,
) -> (f64, DMatrix<f64>, DVector<f64>) {
    let n = z.nrows() as f64;
    let logits = add_bias(z * weights, bias);
    let mut loss = 0.0;
    let mut resid = DMatrix::zeros(logits.nrows(), logits.ncols());
    for (i, row) in logits.row_iter().enumerate() {
        let mx = row.max();
        let lse = mx + row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
        loss += lse - row[y[i]];
        for c in 0..row.len() {
            resid[(i, c)] = (row[c] - lse).exp();
        }
        resid[(i, y[i])] -= 1.0;
    }
    loss = loss / n + 0.5 * lambda * weights.norm_squared();
    let gw = z.transpose() * &resid / n + weights * lambda;
    let gb = DVector::from_fn(resid.ncols(), |c, _| resid.column(c).sum() / n);
    (loss, gw, gb)
}

/// Fits a probe on a seeded random subset of `(x, y)`.
///
/// Not reaching the gradient tolerance within `max_epochs` is reported through
/// `meta.converged`, not as an error.
pub fn fit_linear_probe(
    x: &LayerActivations,
    y: &Labels,
    subset_size: usize,
    hyper: &ProbeHyper,
    seed: u64,
) -> Result<ProbeModel, ProbeError> {
    hyper.validate()?;
    let n = x.n();
    if y.len() != n {
        return Err(ProbeError::LengthMismatch {
            predictions: n,
            labels: y.len(),
        });
    }
    if subset_size == 0 || subset_size > n {
        return Err(ProbeError::InvalidSubset {
            requested: subset_size,
            available: n,
        });
    }
    let rows: Vec<usize> = if subset_size == n {
        (0..n).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut r = rand::seq::index::sample(&mut rng, n, subset_size).into_vec();
        r.sort_unstable();
        r
    };
    let ys: Vec<usize> = rows.iter().map(|&i| y.get(i)).collect();
    if ys.iter().all(|&c| c == ys[0]) {
        return Err(ProbeError::SingleClassSubset(ys[0]));
    }
    let xs = x.values.select_rows(&rows);
    let m = x.m();
    let k = y.k();

    let cnt = xs.nrows() as f64;
    let mean = DVector::from_fn(m, |j, _| xs.column(j).sum() / cnt);
    let scale = DVector::from_fn(m, |j, _| {
        let sd = (xs.column(j).iter().map(|v| (v - mean[j]).powi(2)).sum::<f64>() / cnt).sqrt();
        if sd > 0.0 {
            sd
        } else {
            1.0
        }
    });
    let z = standardize(&xs, &mean, &scale);

    let mut w = DMatrix::zeros(m, k);
    let mut b = DVector::zeros(k);
    let (mut loss, mut gw, mut gb) = loss_and_gradient(&z, &ys, &w, &b, hyper.lambda);
    let initial_loss = loss;
    let mut step = 1.0;
    let mut epochs = 0;
    let mut gnorm = (gw.norm_squared() + gb.norm_squared()).sqrt();
    while gnorm > hyper.grad_tol && epochs < hyper.max_epochs {
        epochs += 1;
        step *= 2.0;
        let g2 = gnorm * gnorm;
        loop {
            let w_try = &w - &gw * step;
            let b_try = &b - &gb * step;
            let (l_try, gw_try, gb_try) = loss_and_gradient(&z, &ys, &w_try, &b_try, hyper.lambda);
            if l_try <= loss - hyper.armijo * step * g2 {
                w = w_try;
                b = b_try;
                loss = l_try;
                gw = gw_try;
                gb = gb_try;
                break;
            }
            step *= 0.5;
            if step < 1e-16 {
                break;
            }
        }
        if step < 1e-16 {
            break;
        }
        gnorm = (gw.norm_squared() + gb.norm_squared()).sqrt();
    }
    let converged = gnorm <= hyper.grad_tol;
    if !converged {
        log::warn!("probe stopped after {epochs} epochs with gradient norm {gnorm:.3e}");
    }
    Ok(ProbeModel {
        weights: w,
        bias: b,
        feature_mean: mean,
        feature_scale: scale,
        meta: TrainingMeta {
            subset_size,
            n_available: n,
            seed,
            hyper: *hyper,
            solver: "full-batch gradient descent, backtracking line search".into(),
            converged,
            epochs,
            final_loss: loss,
            initial_loss,
            final_grad_norm: gnorm,
        },
    })
}

pub fn evaluate(model: &ProbeModel, x: &LayerActivations, y: &Labels) -> Result<f64, ProbeError> {
    let pred = model.predict(x)?;
    if pred.len() != y.len() {
        return Err(ProbeError::LengthMismatch {
            predictions: pred.len(),
            labels: y.len(),
        });
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    let hits = pred.iter().zip(y.as_slice()).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / pred.len() as f64)
}

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self, ProbeError> {
        let k = counts.len();
        if k == 0 || counts.iter().any(|r| r.len() != k) {
            return Err(ProbeError::NotSquare);
        }
        Ok(ConfusionMatrix { counts })
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth][predicted]
    }

    pub fn rows(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn total(&self) -> u64 {
        self.row_sums().iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k()).map(|i| self.counts[i][i]).sum()
    }

    /// Diagonal mass over total; 0 for an empty table.
    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            0.0
        } else {
            self.trace() as f64 / total as f64
        }
    }

    /// Square CSV with a header row and a leading column of class names.
    pub fn to_csv(&self, class_names: &[String]) -> CsvDoc {
        let name = |i: usize| class_names.get(i).cloned().unwrap_or_else(|| i.to_string());
        let mut header = vec!["true\\predicted".to_string()];
        header.extend((0..self.k()).map(name));
        let mut doc = CsvDoc::new(&header);
        for (t, row) in self.counts.iter().enumerate() {
            let mut fields = vec![name(t)];
            fields.extend(row.iter().map(|c| c.to_string()));
            doc.row(&fields);
        }
        doc
    }
}

pub fn confusion_matrix(predictions: &[usize], y: &Labels) -> Result<ConfusionMatrix, ProbeError> {
    if predictions.len() != y.len() {
        return Err(ProbeError::LengthMismatch {
            predictions: predictions.len(),
            labels: y.len(),
        });
    }
    let k = y.k();
    let mut counts = vec![vec![0u64; k]; k];
    for (&p, &t) in predictions.iter().zip(y.as_slice()) {
        if p >= k {
            return Err(ProbeError::PredictionOutOfRange { prediction: p, k });
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub layer_index: i64,
    pub layer_id: String,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ProbeReport {
    pub records: Vec<ProbeRecord>,
}

impl ProbeReport {
    pub fn to_csv(&self) -> CsvDoc {
        let mut doc = CsvDoc::new(&["layer_index", "train_accuracy", "test_accuracy"]);
        for r in &self.records {
            doc.row(&[r.layer_index.to_string(), fmt_f64(r.train_accuracy), fmt_f64(r.test_accuracy)]);
        }
        doc
    }
}

/// In-memory activations of one layer for both splits.
#[derive(Debug, Clone)]
pub struct LayerSplit {
    pub layer_index: i64,
    pub layer_id: String,
    pub train: LayerActivations,
    pub test: LayerActivations,
}

fn probe_one(
    split: &LayerSplit,
    y_train: &Labels,
    y_test: &Labels,
    subset_size: usize,
    hyper: &ProbeHyper,
    seed: u64,
) -> Result<ProbeRecord, ProbeError> {
    let model = fit_linear_probe(&split.train, y_train, subset_size, hyper, seed)?;
    Ok(ProbeRecord {
        layer_index: split.layer_index,
        layer_id: split.layer_id.clone(),
        train_accuracy: evaluate(&model, &split.train, y_train)?,
        test_accuracy: evaluate(&model, &split.test, y_test)?,
        converged: model.meta.converged,
    })
}

fn collect_records(results: Vec<(String, Result<ProbeRecord, ProbeError>)>) -> Result<ProbeReport, ProbeError> {
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (layer_id, r) in results {
        match r {
            Ok(rec) => records.push(rec),
            Err(error) => failures.push(LayerFailure { layer_id, error }),
        }
    }
    if failures.is_empty() {
        Ok(ProbeReport { records })
    } else {
        Err(ProbeError::LayerFailures(failures))
    }
}

/// One probe per layer, same seed throughout so every layer sees the same subset.
pub fn probe_layers(
    layers: &[LayerSplit],
    y_train: &Labels,
    y_test: &Labels,
    subset_size: usize,
    hyper: &ProbeHyper,
    seed: u64,
) -> Result<ProbeReport, ProbeError> {
    let results = layers
        .par_iter()
        .map(|l| (l.layer_id.clone(), probe_one(l, y_train, y_test, subset_size, hyper, seed)))
        .collect();
    collect_records(results)
}

/// Manifest-driven [`probe_layers`]; layers are loaded lazily inside each task.
pub fn probe_curve(
    train: &DatasetManifest,
    test: &DatasetManifest,
    subset_size: usize,
    hyper: &ProbeHyper,
    seed: u64,
) -> Result<ProbeReport, ProbeError> {
    if train.class_names != test.class_names {
        return Err(ProbeError::ManifestMismatch("class names differ".into()));
    }
    let same_layers = train.layers.len() == test.layers.len()
        && train
            .layers
            .iter()
            .zip(&test.layers)
            .all(|(a, b)| a.layer_index == b.layer_index && a.layer_id == b.layer_id);
    if !same_layers {
        return Err(ProbeError::ManifestMismatch("layer lists differ".into()));
    }
    let y_train = train.load_labels()?;
    let y_test = test.load_labels()?;
    let results = train
        .layers
        .par_iter()
        .zip(test.layers.par_iter())
        .map(|(a, b)| {
            let run = || -> Result<ProbeRecord, ProbeError> {
                let split = LayerSplit {
                    layer_index: a.layer_index,
                    layer_id: a.layer_id.clone(),
                    train: train.load_layer(a)?,
                    test: test.load_layer(b)?,
                };
                y_train.check_pairs_with(&split.train)?;
                y_test.check_pairs_with(&split.test)?;
                probe_one(&split, &y_train, &y_test, subset_size, hyper, seed)
            };
            (a.layer_id.clone(), run())
        })
        .collect();
    collect_records(results)
}

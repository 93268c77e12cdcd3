//! Activation dumps, label files, dataset manifests and synthetic fixtures.

mod dump;
mod manifest;
mod synth;

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use thiserror::Error;

pub use dump::{
    decode_activations, decode_labels, encode_activations, encode_labels, read_activation_dump,
    read_labels, write_activation_dump, write_labels, Dtype, FORMAT_VERSION, HEADER_LEN, MAGIC,
};
pub use manifest::{DatasetManifest, LayerEntry, Split};
pub use synth::{synth_gaussian_clusters, synth_swiss_roll, GaussianClusters, SwissRoll, SWISS_ROLL_HEIGHT, SWISS_ROLL_T_RANGE};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("bad magic at offset {offset}: not an LPRB dump")]
    BadMagic { offset: u64 },
    #[error("unsupported format version {version} at offset {offset}")]
    UnsupportedVersion { version: u32, offset: u64 },
    #[error("unsupported dtype code {code} at offset {offset}")]
    UnsupportedDtype { code: u8, offset: u64 },
    #[error("truncated file: expected {expected} bytes, found {actual} (data ends at offset {offset})")]
    TruncatedFile { offset: u64, expected: u64, actual: u64 },
    #[error("{extra} unexpected trailing bytes starting at offset {offset}")]
    TrailingBytes { offset: u64, extra: u64 },
    #[error("non-finite value at offset {offset} (row {row}, column {col})")]
    NonFiniteValue { offset: u64, row: usize, col: usize },
    #[error("wrong dtype: expected {expected}, found {found:?}")]
    WrongDtype { expected: &'static str, found: Dtype },
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("invalid labels: {0}")]
    InvalidLabels(String),
    #[error("manifest line {line}: {msg}")]
    Manifest { line: usize, msg: String },
    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl IngestError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        IngestError::IoFailure {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// One layer's outputs: row = sample, column = neuron.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerActivations {
    pub layer_id: String,
    pub values: DMatrix<f64>,
    /// Storage type of the dump this came from; used again on write.
    pub dtype: Dtype,
}

impl LayerActivations {
    pub fn new(layer_id: impl Into<String>, values: DMatrix<f64>) -> Result<Self, IngestError> {
        let x = LayerActivations {
            layer_id: layer_id.into(),
            values,
            dtype: Dtype::F64,
        };
        x.validate()?;
        Ok(x)
    }

    pub fn from_row_major(
        layer_id: impl Into<String>,
        n: usize,
        m: usize,
        data: &[f64],
    ) -> Result<Self, IngestError> {
        if data.len() != n * m {
            return Err(IngestError::InvalidShape(format!(
                "buffer of {} values cannot be {n}x{m}",
                data.len()
            )));
        }
        if n == 0 || m == 0 {
            return Err(IngestError::InvalidShape(format!("{n}x{m}")));
        }
        Self::new(layer_id, DMatrix::from_row_slice(n, m, data))
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn m(&self) -> usize {
        self.values.ncols()
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        let (n, m) = self.values.shape();
        if n == 0 || m == 0 {
            return Err(IngestError::InvalidShape(format!(
                "layer {:?} is {n}x{m}; need n >= 1 and m >= 1",
                self.layer_id
            )));
        }
        for i in 0..n {
            for j in 0..m {
                if !self.values[(i, j)].is_finite() {
                    let width = self.dtype.width().max(4);
                    return Err(IngestError::NonFiniteValue {
                        offset: (HEADER_LEN + (i * m + j) * width) as u64,
                        row: i,
                        col: j,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn select_rows(&self, rows: &[usize]) -> LayerActivations {
        LayerActivations {
            layer_id: self.layer_id.clone(),
            values: self.values.select_rows(rows),
            dtype: self.dtype,
        }
    }
}

/// Class index per sample, plus the class count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labels {
    y: Vec<usize>,
    k: usize,
}

impl Labels {
    pub fn new(y: Vec<usize>, k: usize) -> Result<Self, IngestError> {
        if k < 2 {
            return Err(IngestError::InvalidLabels(format!("need at least 2 classes, got {k}")));
        }
        if let Some((i, &v)) = y.iter().enumerate().find(|(_, &v)| v >= k) {
            return Err(IngestError::InvalidLabels(format!(
                "label {v} at sample {i} is outside 0..{k}"
            )));
        }
        Ok(Labels { y, k })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.y
    }

    pub fn get(&self, i: usize) -> usize {
        self.y[i]
    }

    /// Per-class counts N_k.
    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.k];
        for &v in &self.y {
            c[v] += 1;
        }
        c
    }

    pub fn indices_of(&self, class: usize) -> Vec<usize> {
        self.y
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == class)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn select(&self, rows: &[usize]) -> Labels {
        Labels {
            y: rows.iter().map(|&i| self.y[i]).collect(),
            k: self.k,
        }
    }

    pub fn check_pairs_with(&self, x: &LayerActivations) -> Result<(), IngestError> {
        if self.len() != x.n() {
            return Err(IngestError::InvalidShape(format!(
                "{} labels for {} activation rows in layer {:?}",
                self.len(),
                x.n(),
                x.layer_id
            )));
        }
        Ok(())
    }
}

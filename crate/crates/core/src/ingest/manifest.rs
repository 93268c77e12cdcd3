//! Dataset manifest: a line-oriented text file.
//!
//! ```text
//! # comments and blank lines are ignored
//! name cifar10-vgg
//! split test
//! class_names plane,car,bird,cat,deer,dog,frog,horse,ship,truck
//! labels labels.lprb
//! notes inputs padded to 32x32x3
//! layer 2 conv2 layer02.lprb
//! layer 6 conv6 layer06.lprb
//! ```
//!
//! Relative paths are resolved against the manifest's directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{read_activation_dump, read_labels, IngestError, Labels, LayerActivations};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct LayerEntry {
    pub layer_index: i64,
    pub layer_id: String,
    pub activation_path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct DatasetManifest {
    pub name: String,
    pub split: Split,
    pub class_names: Vec<String>,
    pub labels_path: PathBuf,
    pub layers: Vec<LayerEntry>,
    /// Free-form preprocessing notes; carried but never interpreted.
    pub notes: Vec<String>,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self, IngestError> {
        let mut name = None;
        let mut split = None;
        let mut class_names: Option<Vec<String>> = None;
        let mut labels_path = None;
        let mut layers: Vec<LayerEntry> = Vec::new();
        let mut notes = Vec::new();

        for (lineno, raw) in text.lines().enumerate() {
            let line_no = lineno + 1;
            let err = |msg: String| IngestError::Manifest { line: line_no, msg };
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, rest) = match line.split_once(char::is_whitespace) {
                Some((k, r)) => (k, r.trim()),
                None => (line, ""),
            };
            match key {
                "name" => name = Some(rest.to_string()),
                "split" => {
                    split = Some(match rest {
                        "train" => Split::Train,
                        "test" => Split::Test,
                        other => return Err(err(format!("split must be train or test, got {other:?}"))),
                    })
                }
                "class_names" => {
                    let names: Vec<String> = rest.split(',').map(|s| s.trim().to_string()).collect();
                    if names.iter().any(String::is_empty) {
                        return Err(err("empty class name".into()));
                    }
                    class_names = Some(names);
                }
                "labels" => labels_path = Some(PathBuf::from(rest)),
                "notes" => notes.push(rest.to_string()),
                "layer" => {
                    let mut parts = rest.splitn(3, char::is_whitespace);
                    let (Some(idx), Some(id), Some(path)) = (parts.next(), parts.next(), parts.next()) else {
                        return Err(err("expected `layer <index> <layer_id> <path>`".into()));
                    };
                    let layer_index: i64 = idx
                        .parse()
                        .map_err(|_| err(format!("layer index {idx:?} is not an integer")))?;
                    if let Some(prev) = layers.last() {
                        if layer_index <= prev.layer_index {
                            return Err(err(format!(
                                "layer index {layer_index} does not increase (previous {})",
                                prev.layer_index
                            )));
                        }
                    }
                    layers.push(LayerEntry {
                        layer_index,
                        layer_id: id.to_string(),
                        activation_path: PathBuf::from(path.trim()),
                    });
                }
                other => return Err(err(format!("unknown field {other:?}"))),
            }
        }

        let missing = |f: &str| IngestError::Manifest {
            line: 0,
            msg: format!("missing field {f}"),
        };
        let class_names = class_names.ok_or_else(|| missing("class_names"))?;
        if class_names.len() < 2 {
            return Err(IngestError::Manifest {
                line: 0,
                msg: "need at least two class names".into(),
            });
        }
        if layers.is_empty() {
            return Err(missing("layer"));
        }
        Ok(DatasetManifest {
            name: name.ok_or_else(|| missing("name"))?,
            split: split.ok_or_else(|| missing("split"))?,
            class_names,
            labels_path: labels_path.ok_or_else(|| missing("labels"))?,
            layers,
            notes,
            base_dir: base_dir.into(),
        })
    }

    /// Parses a manifest file and checks that every referenced path exists.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, IngestError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| IngestError::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let manifest = Self::parse(&text, base)?;
        for p in std::iter::once(&manifest.labels_path).chain(manifest.layers.iter().map(|l| &l.activation_path)) {
            let full = manifest.resolve(p);
            if !full.is_file() {
                return Err(IngestError::io(
                    &full,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "referenced by manifest"),
                ));
            }
        }
        Ok(manifest)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "name {}", self.name);
        let _ = writeln!(s, "split {}", self.split.as_str());
        let _ = writeln!(s, "class_names {}", self.class_names.join(","));
        let _ = writeln!(s, "labels {}", self.labels_path.display());
        for note in &self.notes {
            let _ = writeln!(s, "notes {note}");
        }
        for l in &self.layers {
            let _ = writeln!(s, "layer {} {} {}", l.layer_index, l.layer_id, l.activation_path.display());
        }
        s
    }

    pub fn k(&self) -> usize {
        self.class_names.len()
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn load_labels(&self) -> Result<Labels, IngestError> {
        read_labels(self.resolve(&self.labels_path), Some(self.k()))
    }

    /// Finds a layer by id or by its integer index.
    pub fn find_layer(&self, key: &str) -> Option<&LayerEntry> {
        self.layers
            .iter()
            .find(|l| l.layer_id == key)
            .or_else(|| key.parse::<i64>().ok().and_then(|i| self.layers.iter().find(|l| l.layer_index == i)))
    }

    pub fn load_layer(&self, entry: &LayerEntry) -> Result<LayerActivations, IngestError> {
        let mut x = read_activation_dump(self.resolve(&entry.activation_path))?;
        x.layer_id = entry.layer_id.clone();
        Ok(x)
    }

    /// Loads one layer together with the labels and checks that they pair up.
    pub fn load_layer_with_labels(&self, entry: &LayerEntry) -> Result<(LayerActivations, Labels), IngestError> {
        let x = self.load_layer(entry)?;
        let y = self.load_labels()?;
        y.check_pairs_with(&x)?;
        Ok((x, y))
    }

    pub fn class_index(&self, name_or_index: &str) -> Option<usize> {
        if let Some(i) = self.class_names.iter().position(|c| c == name_or_index) {
            return Some(i);
        }
        name_or_index.parse::<usize>().ok().filter(|&i| i < self.k())
    }
}

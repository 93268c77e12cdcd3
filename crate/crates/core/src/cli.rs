//! Command-line front end. Every subcommand writes into `--out` and leaves a
//! `run_config.json` there recording the exact parameters used.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::classvec::{
    class_vectors, fix_signs, kde_modes, pairplot_coords, rank_extremes, typicality_scores, ClassVecError,
    ClassVectorSet, Variant,
};
use crate::ingest::{
    read_labels, synth_gaussian_clusters, synth_swiss_roll, write_activation_dump, write_labels, DatasetManifest,
    IngestError, LayerActivations, LayerEntry, Labels, Split, SWISS_ROLL_T_RANGE,
};
use crate::linalg::{center_columns, pca, LinalgError, DEFAULT_RANK_TOL};
use crate::output::{atomic_write, fmt_f64, CsvDoc};
use crate::probe::{confusion_matrix, evaluate, fit_linear_probe, probe_curve, ProbeError, ProbeHyper};
use crate::render::{
    animate_tour_dir, histogram, histogram_svg, line_plot_svg, scatter_svg, AnimationOptions, PlotStyle, RenderError,
};
use crate::tour::{build_tour_basis, render_tour, Frame, TourBasis, TourError, TourPath, TourPreset};
use crate::tsne::{knn_purity, tsne_embed, TsneError, TsneParams};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    ClassVec(#[from] ClassVecError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Tour(#[from] TourError),
    #[error(transparent)]
    Tsne(#[from] TsneError),
    #[error(transparent)]
    Probe(#[from] ProbeError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("layer \"{0}\" is not in the manifest")]
    LayerNotFound(String),
    #[error("class \"{0}\" is not in the manifest")]
    UnknownClass(String),
    #[error("{0}")]
    InvalidArgument(String),
}

#[derive(Debug, Parser)]
#[command(name = "layerprobe", version, about = "Layer-wise probing of classifier activations")]
pub struct Cli {
    /// Seed for every random choice of the run.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Generate a synthetic dataset with train and test manifests.
    Synth(SynthArgs),
    /// Summarise a manifest and its layers.
    Inspect(InspectArgs),
    /// Principal components of one layer.
    Pca(PcaArgs),
    /// Class-specific vectors of one layer.
    Classvec(ClassvecArgs),
    /// Scatter plots of pairs of class-specific coordinates.
    Pairplot(PairplotArgs),
    /// Typicality scores and the most and least typical members of a class.
    Rank(RankArgs),
    /// Histogram of one class's typicality scores.
    Hist(HistArgs),
    /// Two-dimensional t-SNE embedding.
    Tsne(TsneArgs),
    /// Planned or random tour through the class-vector span.
    Tour(TourArgs),
    /// Linear-probe accuracy for every layer.
    Probe(ProbeArgs),
    /// Confusion matrix of a probe or of given predictions.
    Confusion(ConfusionArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Inspect(_) => "inspect",
            Command::Pca(_) => "pca",
            Command::Classvec(_) => "classvec",
            Command::Pairplot(_) => "pairplot",
            Command::Rank(_) => "rank",
            Command::Hist(_) => "hist",
            Command::Tsne(_) => "tsne",
            Command::Tour(_) => "tour",
            Command::Probe(_) => "probe",
            Command::Confusion(_) => "confusion",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthKind {
    Clusters,
    SwissRoll,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = SynthKind::Clusters)]
    pub kind: SynthKind,
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    /// Samples per class before the train/test split.
    #[arg(long, default_value_t = 100)]
    pub per_class: usize,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    /// Number of layers; class separation grows linearly up to `--separation`.
    #[arg(long, default_value_t = 3)]
    pub layers: usize,
    #[arg(long, default_value_t = 6.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 3.0)]
    pub anisotropy: f64,
    /// Swiss-roll sample count.
    #[arg(long, default_value_t = 2000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Comma-separated class names.
    #[arg(long)]
    pub class_names: Option<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct InspectArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Also write the summary as JSON into this directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct LayerInput {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Layer id or index; defaults to the last layer.
    #[arg(long)]
    pub layer: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct PcaArgs {
    #[command(flatten)]
    pub input: LayerInput,
    #[arg(long, default_value_t = 2)]
    pub components: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct VectorArgs {
    #[arg(long, default_value = "pc1")]
    #[serde(serialize_with = "display")]
    pub variant: Variant,
    /// Manifest whose samples define the class vectors; defaults to `--manifest`.
    #[arg(long)]
    pub fit_manifest: Option<PathBuf>,
}

fn display<T: std::fmt::Display, S: serde::Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

#[derive(Debug, Args, Serialize)]
pub struct ClassvecArgs {
    #[command(flatten)]
    pub input: LayerInput,
    #[command(flatten)]
    pub vectors: VectorArgs,
}

#[derive(Debug, Args, Serialize)]
#[command(group(ArgGroup::new("pair_source").required(true).args(["pairs", "preset"])))]
pub struct PairplotArgs {
    #[command(flatten)]
    pub input: LayerInput,
    #[command(flatten)]
    pub vectors: VectorArgs,
    /// Class pairs as `j:k,j:k`, by index or name.
    #[arg(long)]
    pub pairs: Option<String>,
    #[arg(long)]
    #[serde(serialize_with = "display_opt")]
    pub preset: Option<TourPreset>,
}

fn display_opt<T: std::fmt::Display, S: serde::Serializer>(v: &Option<T>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(v) => s.collect_str(v),
        None => s.serialize_none(),
    }
}

#[derive(Debug, Args, Serialize)]
pub struct RankArgs {
    #[command(flatten)]
    pub input: LayerInput,
    #[command(flatten)]
    pub vectors: VectorArgs,
    /// Class by index or name.
    #[arg(long)]
    pub class: String,
    #[arg(long, default_value_t = 10)]
    pub count: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct HistArgs {
    #[command(flatten)]
    pub input: LayerInput,
    #[command(flatten)]
    pub vectors: VectorArgs,
    #[arg(long)]
    pub class: String,
    #[arg(long, default_value_t = 40)]
    pub bins: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct TsneArgs {
    #[command(flatten)]
    pub input: LayerInput,
    #[arg(long, default_value_t = 30.0)]
    pub perplexity: f64,
    #[arg(long, default_value_t = 1000)]
    pub iterations: usize,
}

#[derive(Debug, Args, Serialize)]
#[command(group(ArgGroup::new("frames").required(true).args(["pairs", "preset", "random", "swiss_roll"])))]
pub struct TourArgs {
    /// Required unless `--swiss-roll` is given.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub layer: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub vectors: VectorArgs,
    #[arg(long)]
    pub pairs: Option<String>,
    #[arg(long)]
    #[serde(serialize_with = "display_opt")]
    pub preset: Option<TourPreset>,
    /// Number of random keyframes.
    #[arg(long)]
    pub random: Option<usize>,
    /// Top-down to side-on tour of a generated Swiss roll.
    #[arg(long)]
    pub swiss_roll: bool,
    /// Swiss-roll sample count.
    #[arg(long, default_value_t = 2000)]
    pub samples: usize,
    #[arg(long, default_value_t = crate::tour::DEFAULT_STEPS_PER_SEGMENT)]
    pub steps: usize,
    /// Relative rank tolerance of the QR factorisation.
    #[arg(long, default_value_t = DEFAULT_RANK_TOL)]
    pub tol: f64,
    /// Also render an animated GIF.
    #[arg(long)]
    pub gif: bool,
    /// GIF frame delay in hundredths of a second.
    #[arg(long, default_value_t = 5)]
    pub delay: u16,
}

#[derive(Debug, Args, Serialize)]
pub struct ProbeArgs {
    /// Training manifest.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub test_manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Training rows sampled per layer; capped at the training set size.
    #[arg(long, default_value_t = 10_000)]
    pub subset_size: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lambda: f64,
    #[arg(long, default_value_t = 500)]
    pub max_epochs: usize,
}

#[derive(Debug, Args, Serialize)]
#[command(group(ArgGroup::new("source").required(true).args(["predictions", "test_manifest"])))]
pub struct ConfusionArgs {
    /// Manifest with the true labels (with `--predictions`) or the training manifest.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Test manifest; a probe is fit on `--manifest` and evaluated here.
    #[arg(long)]
    pub test_manifest: Option<PathBuf>,
    /// Predicted class per sample, as an LPRB label file.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[arg(long)]
    pub layer: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    pub subset_size: usize,
}

/// Parses `argv` and runs one subcommand. Returns the process exit code:
/// 0 on success, 2 for usage errors, 1 for anything that fails afterwards.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let seed = cli.seed;
    match &cli.command {
        Command::Synth(a) => cmd_synth(a, seed),
        Command::Inspect(a) => cmd_inspect(a),
        Command::Pca(a) => cmd_pca(a),
        Command::Classvec(a) => cmd_classvec(a),
        Command::Pairplot(a) => cmd_pairplot(a),
        Command::Rank(a) => cmd_rank(a),
        Command::Hist(a) => cmd_hist(a),
        Command::Tsne(a) => cmd_tsne(a, seed),
        Command::Tour(a) => cmd_tour(a, seed),
        Command::Probe(a) => cmd_probe(a, seed),
        Command::Confusion(a) => cmd_confusion(a, seed),
    }?;
    if let Some(out) = output_dir(&cli.command) {
        write_run_config(out, cli)?;
    }
    Ok(())
}

fn output_dir(c: &Command) -> Option<&Path> {
    Some(match c {
        Command::Synth(a) => &a.out,
        Command::Inspect(a) => a.out.as_ref()?,
        Command::Pca(a) => &a.input.out,
        Command::Classvec(a) => &a.input.out,
        Command::Pairplot(a) => &a.input.out,
        Command::Rank(a) => &a.input.out,
        Command::Hist(a) => &a.input.out,
        Command::Tsne(a) => &a.input.out,
        Command::Tour(a) => &a.out,
        Command::Probe(a) => &a.out,
        Command::Confusion(a) => &a.out,
    })
}

#[derive(Serialize)]
struct RunConfig<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    seed: u64,
    params: &'a Command,
}

fn write_run_config(out: &Path, cli: &Cli) -> Result<(), CliError> {
    let cfg = RunConfig {
        tool: "layerprobe",
        version: env!("CARGO_PKG_VERSION"),
        command: cli.command.name(),
        seed: cli.seed,
        params: &cli.command,
    };
    let json = serde_json::to_vec_pretty(&cfg).expect("config serialises");
    write_file(&out.join("run_config.json"), &json)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    atomic_write(path, bytes).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

fn write_csv(path: &Path, doc: CsvDoc) -> Result<(), CliError> {
    write_file(path, &doc.into_bytes())
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Write {
        path: dir.to_path_buf(),
        source,
    })
}

struct Loaded {
    manifest: DatasetManifest,
    layer: LayerEntry,
    x: LayerActivations,
    y: Labels,
}

fn pick_layer<'a>(m: &'a DatasetManifest, key: Option<&str>) -> Result<&'a LayerEntry, CliError> {
    match key {
        Some(k) => m.find_layer(k).ok_or_else(|| CliError::LayerNotFound(k.to_string())),
        None => m.layers.last().ok_or_else(|| CliError::LayerNotFound("<last>".into())),
    }
}

fn load(manifest: &Path, layer: Option<&str>) -> Result<Loaded, CliError> {
    let manifest = DatasetManifest::load(manifest)?;
    let layer = pick_layer(&manifest, layer)?.clone();
    let (x, y) = manifest.load_layer_with_labels(&layer)?;
    Ok(Loaded { manifest, layer, x, y })
}

/// Sign-fixed class vectors, fit on `fit` if given and otherwise on `data`.
fn fit_vectors(data: &Loaded, args: &VectorArgs) -> Result<ClassVectorSet, CliError> {
    let cvs = match &args.fit_manifest {
        Some(p) => {
            let fit = load(p, Some(&data.layer.layer_id))?;
            if fit.manifest.class_names != data.manifest.class_names {
                return Err(CliError::InvalidArgument("fit manifest has different class names".into()));
            }
            class_vectors(&fit.x, &fit.y, args.variant)?
        }
        None => class_vectors(&data.x, &data.y, args.variant)?,
    };
    let cvs = fix_signs(cvs);
    for &k in &cvs.ambiguous {
        log::warn!("sign of class {k} is ambiguous: its mean sits on the global mean along its axis");
    }
    Ok(cvs)
}

fn class_arg(m: &DatasetManifest, s: &str) -> Result<usize, CliError> {
    m.class_index(s.trim()).ok_or_else(|| CliError::UnknownClass(s.trim().to_string()))
}

fn parse_pairs(m: &DatasetManifest, list: &str) -> Result<Vec<(usize, usize)>, CliError> {
    list.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|tok| {
            let (a, b) = tok
                .split_once(':')
                .ok_or_else(|| CliError::InvalidArgument(format!("pair \"{tok}\" is not of the form j:k")))?;
            Ok((class_arg(m, a)?, class_arg(m, b)?))
        })
        .collect()
}

fn resolve_pairs(m: &DatasetManifest, pairs: &Option<String>, preset: Option<TourPreset>) -> Result<Vec<(usize, usize)>, CliError> {
    match (pairs, preset) {
        (Some(p), _) => parse_pairs(m, p),
        (None, Some(preset)) => Ok(preset.resolve(&m.class_names)?),
        (None, None) => Err(CliError::InvalidArgument("no class pairs given".into())),
    }
}

fn points_csv(coords: &DMatrix<f64>, labels: &[usize]) -> CsvDoc {
    let mut doc = CsvDoc::new(&["sample_index", "x", "y", "label"]);
    for (i, r) in coords.row_iter().enumerate() {
        doc.row(&[i.to_string(), fmt_f64(r[0]), fmt_f64(r[1]), labels[i].to_string()]);
    }
    doc
}

fn style_for(m: &DatasetManifest, title: String, x_label: String, y_label: String) -> PlotStyle {
    PlotStyle {
        title,
        x_label,
        y_label,
        class_names: m.class_names.clone(),
        ..Default::default()
    }
}

fn cmd_synth(a: &SynthArgs, seed: u64) -> Result<(), CliError> {
    ensure_dir(&a.out.join("train"))?;
    ensure_dir(&a.out.join("test"))?;
    let (layers, labels, default_names): (Vec<(String, LayerActivations)>, Labels, Vec<String>) = match a.kind {
        SynthKind::Clusters => {
            if a.layers == 0 {
                return Err(CliError::InvalidArgument("--layers must be at least 1".into()));
            }
            let mut layers = Vec::new();
            let mut labels = None;
            for i in 0..a.layers {
                let sep = a.separation * (i + 1) as f64 / a.layers as f64;
                let g = synth_gaussian_clusters(a.classes, a.per_class, a.dim, sep, a.anisotropy, seed)?;
                labels.get_or_insert(g.labels);
                layers.push((format!("layer{i}"), g.activations));
            }
            let names = (0..a.classes).map(|k| format!("class{k}")).collect();
            (layers, labels.expect("at least one layer"), names)
        }
        SynthKind::SwissRoll => {
            let roll = synth_swiss_roll(a.samples, a.noise, seed)?;
            // four classes by quarter of the arc
            let (lo, hi) = SWISS_ROLL_T_RANGE;
            let y = roll
                .t
                .iter()
                .map(|t| (((t - lo) / (hi - lo) * 4.0) as usize).min(3))
                .collect();
            let names = (0..4).map(|k| format!("arc{k}")).collect();
            (vec![("roll".into(), roll.activations)], Labels::new(y, 4)?, names)
        }
    };
    let class_names = match &a.class_names {
        Some(s) => s.split(',').map(|c| c.trim().to_string()).collect(),
        None => default_names,
    };
    if class_names.len() != labels.k() {
        return Err(CliError::InvalidArgument(format!(
            "{} class names for {} classes",
            class_names.len(),
            labels.k()
        )));
    }
    for (split, parity) in [(Split::Train, 0), (Split::Test, 1)] {
        let rows: Vec<usize> = (parity..labels.len()).step_by(2).collect();
        let dir = split.as_str();
        write_labels(&labels.select(&rows), a.out.join(dir).join("labels.lprb"))?;
        let mut entries = Vec::new();
        for (i, (id, x)) in layers.iter().enumerate() {
            let file = PathBuf::from(dir).join(format!("{id}.lprb"));
            write_activation_dump(&x.select_rows(&rows), a.out.join(&file))?;
            entries.push(LayerEntry {
                layer_index: i as i64,
                layer_id: id.clone(),
                activation_path: file,
            });
        }
        let manifest = DatasetManifest {
            name: format!("synthetic-{}", if a.kind == SynthKind::Clusters { "clusters" } else { "swiss-roll" }),
            split,
            class_names: class_names.clone(),
            labels_path: PathBuf::from(dir).join("labels.lprb"),
            layers: entries,
            notes: vec![format!("generated with seed {seed}")],
            base_dir: a.out.clone(),
        };
        write_file(&a.out.join(format!("{dir}.manifest")), manifest.to_text().as_bytes())?;
    }
    println!("wrote {} and {}", a.out.join("train.manifest").display(), a.out.join("test.manifest").display());
    Ok(())
}

#[derive(Serialize)]
struct LayerSummary {
    layer_index: i64,
    layer_id: String,
    n: usize,
    m: usize,
    dtype: String,
}

#[derive(Serialize)]
struct Summary {
    name: String,
    split: String,
    class_names: Vec<String>,
    class_counts: Vec<usize>,
    notes: Vec<String>,
    layers: Vec<LayerSummary>,
}

fn cmd_inspect(a: &InspectArgs) -> Result<(), CliError> {
    let m = DatasetManifest::load(&a.manifest)?;
    let y = m.load_labels()?;
    let mut layers = Vec::new();
    for e in &m.layers {
        let x = m.load_layer(e)?;
        y.check_pairs_with(&x)?;
        layers.push(LayerSummary {
            layer_index: e.layer_index,
            layer_id: e.layer_id.clone(),
            n: x.n(),
            m: x.m(),
            dtype: format!("{:?}", x.dtype).to_lowercase(),
        });
    }
    let summary = Summary {
        name: m.name.clone(),
        split: m.split.as_str().to_string(),
        class_names: m.class_names.clone(),
        class_counts: y.counts(),
        notes: m.notes.clone(),
        layers,
    };
    println!("{} ({}), {} samples, {} classes", summary.name, summary.split, y.len(), m.k());
    for (name, c) in summary.class_names.iter().zip(&summary.class_counts) {
        println!("  class {name}: {c}");
    }
    for l in &summary.layers {
        println!("  layer {} {}: {} x {} {}", l.layer_index, l.layer_id, l.n, l.m, l.dtype);
    }
    if let Some(out) = &a.out {
        ensure_dir(out)?;
        write_file(&out.join("summary.json"), &serde_json::to_vec_pretty(&summary).expect("serialises"))?;
    }
    Ok(())
}

fn cmd_pca(a: &PcaArgs) -> Result<(), CliError> {
    let d = load(&a.input.manifest, a.input.layer.as_deref())?;
    ensure_dir(&a.input.out)?;
    let (xc, _) = center_columns(&d.x.values);
    let p = pca(&xc, a.components)?;
    let mut header = vec!["sample_index".to_string()];
    header.extend((1..=a.components).map(|i| format!("pc{i}")));
    header.push("label".into());
    let mut doc = CsvDoc::new(&header);
    for (i, r) in p.scores.row_iter().enumerate() {
        let mut f = vec![i.to_string()];
        f.extend(r.iter().map(|v| fmt_f64(*v)));
        f.push(d.y.get(i).to_string());
        doc.row(&f);
    }
    write_csv(&a.input.out.join("pca_scores.csv"), doc)?;
    let mut ev = CsvDoc::new(&["component", "eigenvalue"]);
    for (i, v) in p.eigenvalues.iter().enumerate() {
        ev.row(&[(i + 1).to_string(), fmt_f64(*v)]);
    }
    write_csv(&a.input.out.join("pca_eigenvalues.csv"), ev)?;
    if a.components >= 2 {
        let coords = p.scores.columns(0, 2).into_owned();
        let style = style_for(&d.manifest, format!("PCA of {}", d.layer.layer_id), "PC 1".into(), "PC 2".into());
        let svg = scatter_svg(&coords, d.y.as_slice(), &style)?;
        write_file(&a.input.out.join("pca.svg"), svg.as_bytes())?;
    }
    Ok(())
}

fn cmd_classvec(a: &ClassvecArgs) -> Result<(), CliError> {
    let d = load(&a.input.manifest, a.input.layer.as_deref())?;
    ensure_dir(&a.input.out)?;
    let cvs = fit_vectors(&d, &a.vectors)?;
    let mut header: Vec<String> = vec!["class".into(), "name".into(), "sign_margin".into(), "ambiguous".into()];
    header.extend((0..cvs.m()).map(|j| format!("v{j}")));
    let mut doc = CsvDoc::new(&header);
    for k in 0..cvs.k() {
        let mut f = vec![
            k.to_string(),
            d.manifest.class_names[k].clone(),
            fmt_f64(cvs.sign_margin(k)),
            cvs.ambiguous.contains(&k).to_string(),
        ];
        f.extend(cvs.theta.column(k).iter().map(|v| fmt_f64(*v)));
        doc.row(&f);
    }
    write_csv(&a.input.out.join("class_vectors.csv"), doc)?;

    let cos = cvs.cosine_matrix();
    let mut header = vec!["class".to_string()];
    header.extend(d.manifest.class_names.iter().cloned());
    let mut doc = CsvDoc::new(&header);
    for k in 0..cvs.k() {
        let mut f = vec![d.manifest.class_names[k].clone()];
        f.extend(cos.row(k).iter().map(|v| fmt_f64(*v)));
        doc.row(&f);
    }
    write_csv(&a.input.out.join("cosines.csv"), doc)?;

    let proj = crate::classvec::centered_projection(&d.x, &cvs)?;
    let mut header = vec!["sample_index".to_string(), "label".to_string()];
    header.extend((0..cvs.k()).map(|k| format!("axis{k}")));
    let mut doc = CsvDoc::new(&header);
    for (i, r) in proj.row_iter().enumerate() {
        let mut f = vec![i.to_string(), d.y.get(i).to_string()];
        f.extend(r.iter().map(|v| fmt_f64(*v)));
        doc.row(&f);
    }
    write_csv(&a.input.out.join("projection.csv"), doc)
}

fn cmd_pairplot(a: &PairplotArgs) -> Result<(), CliError> {
    let d = load(&a.input.manifest, a.input.layer.as_deref())?;
    let pairs = resolve_pairs(&d.manifest, &a.pairs, a.preset)?;
    ensure_dir(&a.input.out)?;
    let cvs = fit_vectors(&d, &a.vectors)?;
    for (j, k) in pairs {
        let coords = pairplot_coords(&d.x, &cvs, j, k)?;
        let stem = format!("pairplot_{j}_{k}");
        write_csv(&a.input.out.join(format!("{stem}.csv")), points_csv(&coords, d.y.as_slice()))?;
        let names = &d.manifest.class_names;
        let style = style_for(
            &d.manifest,
            format!("{} vs {} ({})", names[j], names[k], d.layer.layer_id),
            format!("{} axis", names[j]),
            format!("{} axis", names[k]),
        );
        let svg = scatter_svg(&coords, d.y.as_slice(), &style)?;
        write_file(&a.input.out.join(format!("{stem}.svg")), svg.as_bytes())?;
    }
    Ok(())
}

fn cmd_rank(a: &RankArgs) -> Result<(), CliError> {
    let d = load(&a.input.manifest, a.input.layer.as_deref())?;
    let k = class_arg(&d.manifest, &a.class)?;
    ensure_dir(&a.input.out)?;
    let cvs = fit_vectors(&d, &a.vectors)?;
    let ts = typicality_scores(&d.x, &d.y, &cvs, k)?;
    let mut doc = CsvDoc::new(&["sample_index", "label", "raw", "score", "member"]);
    for i in 0..ts.scores.len() {
        doc.row(&[
            i.to_string(),
            d.y.get(i).to_string(),
            fmt_f64(ts.raw[i]),
            fmt_f64(ts.scores[i]),
            ts.member[i].to_string(),
        ]);
    }
    write_csv(&a.input.out.join("typicality.csv"), doc)?;
    let ex = rank_extremes(&ts, &d.y, k, a.count)?;
    let mut doc = CsvDoc::new(&["kind", "rank", "sample_index", "score"]);
    for (kind, list) in [("top", &ex.top), ("bottom", &ex.bottom)] {
        for (r, &i) in list.iter().enumerate() {
            doc.row(&[kind.to_string(), (r + 1).to_string(), i.to_string(), fmt_f64(ts.scores[i])]);
        }
    }
    write_csv(&a.input.out.join("extremes.csv"), doc)
}

#[derive(Serialize)]
struct ModeReport {
    class: usize,
    bandwidth: Option<f64>,
    mode_count: usize,
    modes: Vec<f64>,
}

fn cmd_hist(a: &HistArgs) -> Result<(), CliError> {
    let d = load(&a.input.manifest, a.input.layer.as_deref())?;
    let k = class_arg(&d.manifest, &a.class)?;
    ensure_dir(&a.input.out)?;
    let cvs = fit_vectors(&d, &a.vectors)?;
    let ts = typicality_scores(&d.x, &d.y, &cvs, k)?;
    let scores = ts.class_scores();
    let h = histogram(&scores, a.bins)?;
    let mut doc = CsvDoc::new(&["bin_lo", "bin_hi", "count"]);
    for (i, c) in h.counts.iter().enumerate() {
        doc.row(&[fmt_f64(h.edges[i]), fmt_f64(h.edges[i + 1]), c.to_string()]);
    }
    write_csv(&a.input.out.join("histogram.csv"), doc)?;
    let name = &d.manifest.class_names[k];
    let style = PlotStyle {
        title: format!("{name} scores ({})", d.layer.layer_id),
        x_label: format!("{name} axis, standardised"),
        y_label: "count".into(),
        ..Default::default()
    };
    write_file(&a.input.out.join("histogram.svg"), histogram_svg(&h, &style)?.as_bytes())?;
    let modes = kde_modes(&scores);
    let report = ModeReport {
        class: k,
        bandwidth: modes.as_ref().map(|m| m.bandwidth),
        mode_count: modes.as_ref().map_or(0, |m| m.count()),
        modes: modes.map(|m| m.modes).unwrap_or_default(),
    };
    if report.mode_count > 1 {
        log::info!("class {name} looks multimodal: {} density peaks", report.mode_count);
    }
    write_file(&a.input.out.join("modes.json"), &serde_json::to_vec_pretty(&report).expect("serialises"))
}

#[derive(Serialize)]
struct TsneSummary {
    kl_divergence: f64,
    knn_purity_10: f64,
    params: TsneParams,
}

fn cmd_tsne(a: &TsneArgs, seed: u64) -> Result<(), CliError> {
    let d = load(&a.input.manifest, a.input.layer.as_deref())?;
    ensure_dir(&a.input.out)?;
    let params = TsneParams {
        perplexity: a.perplexity,
        iterations: a.iterations,
        seed,
        ..Default::default()
    };
    let r = tsne_embed(&d.x, &params)?;
    write_csv(&a.input.out.join("tsne.csv"), points_csv(&r.coords, d.y.as_slice()))?;
    let style = style_for(&d.manifest, format!("t-SNE of {}", d.layer.layer_id), String::new(), String::new());
    write_file(&a.input.out.join("tsne.svg"), scatter_svg(&r.coords, d.y.as_slice(), &style)?.as_bytes())?;
    let summary = TsneSummary {
        kl_divergence: r.kl_divergence_final,
        knn_purity_10: knn_purity(&r.coords, &d.y, 10.min(d.x.n().saturating_sub(1)).max(1)),
        params: r.params,
    };
    write_file(&a.input.out.join("tsne.json"), &serde_json::to_vec_pretty(&summary).expect("serialises"))
}

#[derive(Serialize)]
struct BasisSummary {
    rank: usize,
    route: String,
    identity_residual: Option<f64>,
    keyframes: Vec<String>,
    frame_count: usize,
    steps_per_segment: usize,
}

fn cmd_tour(a: &TourArgs, seed: u64) -> Result<(), CliError> {
    let (basis, path, labels) = if a.swiss_roll {
        let roll = synth_swiss_roll(a.samples, 0.0, seed)?;
        let (lo, hi) = SWISS_ROLL_T_RANGE;
        let labels: Vec<usize> = roll.t.iter().map(|t| (((t - lo) / (hi - lo) * 4.0) as usize).min(3)).collect();
        let keyframes = vec![
            Frame::coordinate_plane(3, 0, 2, "top-down")?,
            Frame::coordinate_plane(3, 0, 1, "side-on")?,
        ];
        (TourBasis::ambient(&roll.activations.values), TourPath::through(keyframes, a.steps)?, labels)
    } else {
        let manifest = a
            .manifest
            .as_ref()
            .ok_or_else(|| CliError::InvalidArgument("--manifest is required unless --swiss-roll is given".into()))?;
        let d = load(manifest, a.layer.as_deref())?;
        // resolve names before any heavy work so a missing class fails fast
        let pairs = match a.random {
            Some(_) => None,
            None => Some(resolve_pairs(&d.manifest, &a.pairs, a.preset)?),
        };
        let cvs = fit_vectors(&d, &a.vectors)?;
        let basis = build_tour_basis(&d.x, &cvs, a.tol)?;
        let path = match (a.random, pairs) {
            (Some(count), _) => TourPath::random(basis.rank, count, a.steps, seed)?,
            (None, Some(pairs)) => {
                TourPath::through(basis.planned_frames(&pairs, Some(&d.manifest.class_names))?, a.steps)?
            }
            (None, None) => unreachable!("pairs resolved above"),
        };
        (basis, path, d.y.as_slice().to_vec())
    };
    let frames_dir = a.out.join("frames");
    ensure_dir(&frames_dir)?;
    let coords = render_tour(&basis, &path)?;
    coords
        .par_iter()
        .enumerate()
        .try_for_each(|(i, c)| write_csv(&frames_dir.join(format!("frame_{i:05}.csv")), points_csv(c, &labels)))?;
    let mut index = CsvDoc::new(&["frame", "segment", "t", "keyframe_label", "file"]);
    for (i, f) in path.frames.iter().enumerate() {
        index.row(&[
            i.to_string(),
            f.segment.to_string(),
            fmt_f64(f.t),
            f.keyframe_label.clone(),
            format!("frames/frame_{i:05}.csv"),
        ]);
    }
    write_csv(&a.out.join("index.csv"), index)?;
    let summary = BasisSummary {
        rank: basis.rank,
        route: format!("{:?}", basis.route),
        identity_residual: basis.identity_residual,
        keyframes: path.keyframes.iter().map(|k| k.label.clone()).collect(),
        frame_count: path.len(),
        steps_per_segment: path.steps_per_segment,
    };
    write_file(&a.out.join("tour.json"), &serde_json::to_vec_pretty(&summary).expect("serialises"))?;
    if a.gif {
        let opts = AnimationOptions {
            delay_cs: a.delay,
            ..Default::default()
        };
        animate_tour_dir(&a.out, &a.out.join("tour.gif"), &opts)?;
    }
    Ok(())
}

fn cmd_probe(a: &ProbeArgs, seed: u64) -> Result<(), CliError> {
    let train = DatasetManifest::load(&a.manifest)?;
    let test = DatasetManifest::load(&a.test_manifest)?;
    ensure_dir(&a.out)?;
    let n_train = train.load_labels()?.len();
    let subset = a.subset_size.min(n_train);
    if subset < a.subset_size {
        log::info!("subset size capped at the {n_train} training samples");
    }
    let hyper = ProbeHyper {
        lambda: a.lambda,
        max_epochs: a.max_epochs,
        ..Default::default()
    };
    let report = probe_curve(&train, &test, subset, &hyper, seed)?;
    write_csv(&a.out.join("probe_report.csv"), report.to_csv())?;
    write_file(&a.out.join("probe_report.json"), &serde_json::to_vec_pretty(&report).expect("serialises"))?;
    let series = vec![
        ("train".to_string(), report.records.iter().map(|r| (r.layer_index as f64, r.train_accuracy)).collect()),
        ("test".to_string(), report.records.iter().map(|r| (r.layer_index as f64, r.test_accuracy)).collect()),
    ];
    let style = PlotStyle {
        title: "Linear probe accuracy".into(),
        x_label: "layer".into(),
        y_label: "accuracy".into(),
        ..Default::default()
    };
    write_file(&a.out.join("probe_curve.svg"), line_plot_svg(&series, &style)?.as_bytes())
}

#[derive(Serialize)]
struct ConfusionSummary {
    accuracy: f64,
    total: u64,
    row_sums: Vec<u64>,
}

fn cmd_confusion(a: &ConfusionArgs, seed: u64) -> Result<(), CliError> {
    let (names, predictions, truth) = match (&a.predictions, &a.test_manifest) {
        (Some(pred_path), _) => {
            let m = DatasetManifest::load(&a.manifest)?;
            let y = m.load_labels()?;
            let pred = read_labels(pred_path, Some(m.k()))?;
            (m.class_names.clone(), pred.as_slice().to_vec(), y)
        }
        (None, Some(test_path)) => {
            let train = load(&a.manifest, a.layer.as_deref())?;
            let test = load(test_path, Some(&train.layer.layer_id))?;
            if train.manifest.class_names != test.manifest.class_names {
                return Err(CliError::InvalidArgument("train and test manifests have different class names".into()));
            }
            let model = fit_linear_probe(&train.x, &train.y, a.subset_size.min(train.x.n()), &ProbeHyper::default(), seed)?;
            let acc = evaluate(&model, &test.x, &test.y)?;
            log::info!("probe test accuracy {acc:.4}");
            (test.manifest.class_names.clone(), model.predict(&test.x)?, test.y)
        }
        (None, None) => return Err(CliError::InvalidArgument("give --predictions or --test-manifest".into())),
    };
    ensure_dir(&a.out)?;
    let cm = confusion_matrix(&predictions, &truth)?;
    write_csv(&a.out.join("confusion.csv"), cm.to_csv(&names))?;
    let summary = ConfusionSummary {
        accuracy: cm.accuracy(),
        total: cm.total(),
        row_sums: cm.row_sums(),
    };
    println!("accuracy {:.4} over {} samples", summary.accuracy, summary.total);
    write_file(&a.out.join("confusion.json"), &serde_json::to_vec_pretty(&summary).expect("serialises"))
}

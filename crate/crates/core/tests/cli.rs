use std::path::{Path, PathBuf};

use layerprobe::cli::run;

fn call(args: &[&str]) -> i32 {
    let argv: Vec<String> = std::iter::once("layerprobe").chain(args.iter().copied()).map(String::from).collect();
    run(argv)
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

fn synth(dir: &Path, extra: &[&str]) -> PathBuf {
    let out = dir.join("data");
    let mut args = vec!["--seed", "3", "synth", "--out", s(&out), "--per-class", "30", "--dim", "8"];
    args.extend_from_slice(extra);
    assert_eq!(call(&args), 0);
    out
}

fn run_config(dir: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join("run_config.json")).expect("run_config.json");
    serde_json::from_str(&text).unwrap()
}

#[test]
fn synth_classvec_pairplot_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), &["--classes", "4"]);
    let manifest = data.join("train.manifest");
    assert!(manifest.is_file() && data.join("test.manifest").is_file());

    let cv = tmp.path().join("cv");
    assert_eq!(call(&["classvec", "--manifest", s(&manifest), "--out", s(&cv)]), 0);
    let vectors = std::fs::read_to_string(cv.join("class_vectors.csv")).unwrap();
    // one row per class, one column per neuron after four metadata fields
    assert_eq!(vectors.lines().count(), 1 + 4);
    assert_eq!(vectors.lines().next().unwrap().split(',').count(), 4 + 8);
    assert_eq!(run_config(&cv)["command"], "classvec");

    let pp = tmp.path().join("pp");
    assert_eq!(call(&["pairplot", "--manifest", s(&manifest), "--out", s(&pp), "--pairs", "0:1,class2:class3"]), 0);
    for f in ["pairplot_0_1.csv", "pairplot_0_1.svg", "pairplot_2_3.csv", "pairplot_2_3.svg"] {
        assert!(pp.join(f).is_file(), "{f}");
    }
    let csv = std::fs::read_to_string(pp.join("pairplot_0_1.csv")).unwrap();
    // the training split keeps every other row: 4 classes × 15
    assert_eq!(csv.lines().count(), 1 + 60);
    assert!(std::fs::read_to_string(pp.join("pairplot_0_1.svg")).unwrap().starts_with("<svg"));
    assert_eq!(run_config(&pp)["seed"], 0);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(call(&["frobnicate"]), 2);
    assert_eq!(call(&["pairplot", "--manifest", "x", "--out", "y"]), 2);
}

#[test]
fn missing_preset_class_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), &["--classes", "4", "--class-names", "plane,car,bird,cat"]);
    let out = tmp.path().join("tour");
    let code = call(&["tour", "--manifest", s(&data.join("train.manifest")), "--out", s(&out), "--preset", "mechanical"]);
    assert_eq!(code, 1);
}

#[test]
fn gif_tour_has_one_image_per_frame() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("roll");
    assert_eq!(call(&["tour", "--swiss-roll", "--samples", "300", "--steps", "6", "--gif", "--out", s(&out)]), 0);
    let index = std::fs::read_to_string(out.join("index.csv")).unwrap();
    let frames = index.lines().count() - 1;
    assert_eq!(frames, 7);

    let mut opts = gif::DecodeOptions::new();
    opts.set_color_output(gif::ColorOutput::Indexed);
    let mut dec = opts.read_info(std::fs::File::open(out.join("tour.gif")).unwrap()).unwrap();
    let mut images = 0;
    while dec.read_next_frame().unwrap().is_some() {
        images += 1;
    }
    assert_eq!(images, frames);
    let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("animation.json")).unwrap()).unwrap();
    assert_eq!(meta["frame_count"], frames);
    assert_eq!(run_config(&out)["command"], "tour");
}

#[test]
fn probe_and_confusion_write_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), &["--classes", "3", "--layers", "3"]);
    let (train, test) = (data.join("train.manifest"), data.join("test.manifest"));

    let probe = tmp.path().join("probe");
    assert_eq!(call(&["probe", "--manifest", s(&train), "--test-manifest", s(&test), "--out", s(&probe)]), 0);
    let report = std::fs::read_to_string(probe.join("probe_report.csv")).unwrap();
    let mut lines = report.lines();
    assert_eq!(lines.next(), Some("layer_index,train_accuracy,test_accuracy"));
    assert_eq!(lines.count(), 3);

    let conf = tmp.path().join("confusion");
    assert_eq!(call(&["confusion", "--manifest", s(&train), "--test-manifest", s(&test), "--out", s(&conf)]), 0);
    let matrix = std::fs::read_to_string(conf.join("confusion.csv")).unwrap();
    assert_eq!(matrix.lines().count(), 1 + 3);
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn seedtrack(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seedtrack"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = seedtrack(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn synth(dir: &Path, preset: &str, frames: usize) -> String {
    let seq = dir.join(preset);
    ok(&[
        "synth",
        "--preset",
        preset,
        "--out",
        seq.to_str().unwrap(),
        "--frames",
        &frames.to_string(),
    ]);
    seq.join("manifest.json").to_str().unwrap().to_string()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn segment_clean_preset_and_score() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = synth(tmp.path(), "clean", 5);
    let out = tmp.path().join("out");
    ok(&[
        "segment",
        "--manifest",
        &manifest,
        "--out",
        out.to_str().unwrap(),
        "--no-crf",
        "--eval",
        "--save-prob",
    ]);
    let meta = json(&out.join("run.json"));
    assert!(meta["scores"]["j_mean"].as_f64().unwrap() >= 0.85);
    assert_eq!(meta["foreground_seeds"].as_array().unwrap().len(), 5);
    assert!(meta["selected_track"].is_u64());
    assert!(out.join("mask_0004.png").exists());
    assert!(out.join("prob_0004.npy").exists());
    assert!(out.join("scores.csv").exists());
}

#[test]
fn adaptation_setting_keeps_frame_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = synth(tmp.path(), "drift", 4);
    let mut masks = Vec::new();
    for adapt in ["1", "inf"] {
        let out = tmp.path().join(format!("out_{adapt}"));
        ok(&[
            "segment",
            "--manifest",
            &manifest,
            "--out",
            out.to_str().unwrap(),
            "--no-crf",
            "--adapt-every",
            adapt,
        ]);
        masks.push(fs::read(out.join("mask_0000.png")).unwrap());
        let meta = json(&out.join("run.json"));
        assert_eq!(meta["config"]["adapt_every"], serde_json::json!(if adapt == "1" { serde_json::json!(1) } else { serde_json::json!("inf") }));
    }
    assert_eq!(masks[0], masks[1]);
}

#[test]
fn config_file_and_flags_layer() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = synth(tmp.path(), "clean", 2);
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"seed_count": 50, "use_crf": false, "ranking": "objectness"}"#).unwrap();
    let out = tmp.path().join("out");
    ok(&[
        "segment",
        "--manifest",
        &manifest,
        "--out",
        out.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--seed-count",
        "60",
    ]);
    let meta = json(&out.join("run.json"));
    assert_eq!(meta["config"]["seed_count"], 60);
    assert_eq!(meta["config"]["use_crf"], false);
    assert_eq!(meta["config"]["ranking"], "objectness");
    assert_eq!(meta["config"]["window"], 9);
}

#[test]
fn missing_flow_file_is_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = synth(tmp.path(), "clean", 2);
    let flow = tmp.path().join("clean/flow_0001.npy");
    fs::remove_file(&flow).unwrap();
    let out = seedtrack(&["segment", "--manifest", &manifest, "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("flow_0001.npy") && err.contains("frame 1"), "{err}");
}

#[test]
fn bad_arguments_exit_with_input_error() {
    assert_eq!(seedtrack(&["segment", "--bogus"]).status.code(), Some(1));
    assert_eq!(seedtrack(&["synth", "--preset", "nope", "--out", "x"]).status.code(), Some(1));
    assert!(seedtrack(&["--help"]).status.success());
}

#[test]
fn semisupervised_needs_annotation() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = synth(tmp.path(), "clean", 2);
    let mut m = json(Path::new(&manifest));
    m.as_object_mut().unwrap().remove("annotation0");
    fs::write(&manifest, m.to_string()).unwrap();
    let out = seedtrack(&["segment", "--manifest", &manifest, "--out", tmp.path().join("o").to_str().unwrap(), "--semi-supervised"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn eval_identity_empty_and_mismatch() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), "clean", 3);
    let gt = tmp.path().join("clean/gt");
    let scores = tmp.path().join("scores");
    ok(&["eval", "--pred", gt.to_str().unwrap(), "--gt", gt.to_str().unwrap(), "--out", scores.to_str().unwrap()]);
    let s = json(&scores.join("scores.json"));
    assert_eq!(s["j_mean"], 1.0);
    assert_eq!(s["f_mean"], 1.0);
    let csv = fs::read_to_string(scores.join("scores.csv")).unwrap();
    assert!(csv.starts_with("sequence,frame,J,F\n"));
    assert_eq!(csv.lines().count(), 4);

    let empty = tmp.path().join("empty");
    fs::create_dir_all(&empty).unwrap();
    let blank = image::GrayImage::new(160, 96);
    for k in 0..3 {
        blank.save(empty.join(format!("{k:04}.png"))).unwrap();
    }
    ok(&["eval", "--pred", empty.to_str().unwrap(), "--gt", gt.to_str().unwrap(), "--out", scores.to_str().unwrap()]);
    let s = json(&scores.join("scores.json"));
    assert_eq!(s["j_mean"], 0.0);

    fs::remove_file(empty.join("0002.png")).unwrap();
    let out = seedtrack(&["eval", "--pred", empty.to_str().unwrap(), "--gt", gt.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

fn drift_column(csv: &str, col: usize) -> Vec<f64> {
    csv.lines().skip(1).map(|l| l.split(',').nth(col).unwrap().parse().unwrap()).collect()
}

#[test]
fn drift_curves() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = synth(tmp.path(), "noiseless", 4);
    let out = ok(&["drift", "--manifest", &manifest]);
    let csv = String::from_utf8(out.stdout).unwrap();
    assert!(csv.starts_with("frame,d_fg,d_bg,misclassified_fg\n"));
    for col in 1..=3 {
        assert!(drift_column(&csv, col).iter().all(|&v| v == 0.0));
    }

    let manifest = synth(tmp.path(), "noiseless-drift", 6);
    let path = tmp.path().join("drift.csv");
    ok(&["drift", "--manifest", &manifest, "--out", path.to_str().unwrap()]);
    let d_fg = drift_column(&fs::read_to_string(&path).unwrap(), 1);
    assert!(d_fg.windows(2).all(|w| w[1] >= w[0]), "{d_fg:?}");

    let mut m = json(Path::new(&manifest));
    m["frames"][0].as_object_mut().unwrap().remove("gt");
    fs::write(&manifest, m.to_string()).unwrap();
    assert_eq!(seedtrack(&["drift", "--manifest", &manifest]).status.code(), Some(1));
}

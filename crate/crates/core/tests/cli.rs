use std::path::Path;
use std::process::{Command, Output};

use hough_mitosis::report::parse_mean_auc;

const TINY: &str = r#"{
  "treeCount": 1, "maxDepth": 8, "featuresPerSplit": 20, "thresholdsPerFeature": 8,
  "backgroundRatio": 2, "seed": 3,
  "synth": {"imageSize": 80, "cellCount": 5, "frameCount": 3, "mitosisEventCount": 1}
}"#;

fn hmd(dir: &Path, args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_hmd"))
        .args(args)
        .arg("--config")
        .arg(dir.join("tiny.json"))
        .env("HMD_THREADS", "2")
        .output()
        .expect("hmd runs");
    assert!(
        out.status.success(),
        "hmd {args:?} failed:\n{}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tiny.json"), TINY).unwrap();
    dir
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

#[test]
fn synth_train_detect_eval() {
    let tmp = setup();
    let d = tmp.path();
    let (data, run) = (p(d, "data"), p(d, "run"));
    hmd(d, &["synth", "--movies", "3", "--out", &data]);
    assert!(d.join("data/ground_truth.json").exists());
    hmd(d, &["train", "--data", &data, "--movies", "movie000,movie001", "--out", &run]);
    let model = p(d, "run/model.hmdf");
    hmd(d, &["detect", "--model", &model, "--data", &data, "--out", &run]);
    let dets = std::fs::read_to_string(d.join("run/detections.csv")).unwrap();
    assert!(dets.starts_with("# hmd-detections v1\nframe,class,x,y,score\n"));

    hmd(d, &["eval", "--data", &data, "--model", &model, "--target", "mother", "--out", &run]);
    let summary = std::fs::read_to_string(d.join("run/auc.csv")).unwrap();
    let a = parse_mean_auc(&summary).expect("parseable AUC");
    assert!((0.0..=1.0).contains(&a));
    assert!(d.join("run/pr_mother_fold0.csv").exists());

    hmd(d, &["train-crf", "--model", &model, "--data", &data, "--out", &run]);
    let w = p(d, "run/weights.json");
    hmd(d, &["detect-mitosis", "--model", &model, "--weights", &w, "--data", &data, "--out", &run]);
    let events = std::fs::read_to_string(d.join("run/events.csv")).unwrap();
    assert!(events.lines().nth(1) == Some("frameT,motherX,motherY,daughterX,daughterY,score"));

    hmd(d, &["pr-plot", "--input", &p(d, "run/pr_mother_fold0.csv"), "--out", &run]);
    assert!(std::fs::read_to_string(d.join("run/pr.svg")).unwrap().contains("<svg"));
}

#[test]
fn five_fold_eval_on_five_movies() {
    let tmp = setup();
    let d = tmp.path();
    let data = p(d, "data");
    hmd(d, &["synth", "--movies", "5", "--out", &data]);
    hmd(d, &["eval", "--data", &data, "--folds", "5", "--target", "daughter", "--out", &p(d, "cv")]);
    let summary = std::fs::read_to_string(d.join("cv/auc.csv")).unwrap();
    let folds: Vec<&str> = summary.lines().filter(|l| l.chars().next().is_some_and(|c| c.is_ascii_digit())).collect();
    assert_eq!(folds.len(), 5, "{summary}");
    let mean = parse_mean_auc(&summary).unwrap();
    let avg = folds.iter().map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap()).sum::<f64>() / 5.0;
    assert!((mean - avg).abs() < 1e-12);
}

#[test]
fn ablate_reports_four_models() {
    let tmp = setup();
    let d = tmp.path();
    let data = p(d, "data");
    hmd(d, &["synth", "--movies", "4", "--out", &data]);
    let out = hmd(d, &["ablate", "--data", &data, "--folds", "2", "--out", &p(d, "ab")]);
    let table = std::fs::read_to_string(d.join("ab/ablation.csv")).unwrap();
    assert_eq!(String::from_utf8_lossy(&out.stdout), table);
    let rows: Vec<&str> = table.lines().skip(2).collect();
    let names: Vec<&str> = rows.iter().map(|r| r.split(',').next().unwrap()).collect();
    assert_eq!(names, ["full", "mother+daughter", "daughter+distance", "mother+distance"]);
    for r in rows {
        let mean: f64 = r.split(',').nth(1).unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&mean));
    }
}

#[test]
fn cf_mode_and_errors() {
    let tmp = setup();
    let d = tmp.path();
    let data = p(d, "data");
    hmd(d, &["synth", "--movies", "2", "--out", &data]);
    hmd(d, &["train", "--data", &data, "--mode", "cf", "--out", &p(d, "cf")]);
    let model = p(d, "cf/model.hmdf");
    hmd(d, &["detect", "--model", &model, "--data", &data, "--mode", "cf", "--out", &p(d, "cf")]);

    // a vote-less model cannot feed the voting detector
    let out = Command::new(env!("CARGO_BIN_EXE_hmd"))
        .args(["detect", "--model", &model, "--data", &data, "--mode", "hf", "--out", &p(d, "cf")])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no votes"));

    std::fs::write(d.join("bad.json"), r#"{"treez": 3}"#).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_hmd"))
        .args(["synth", "--config", &p(d, "bad.json"), "--out", &p(d, "x")])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("treez"));
}

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn riskscope(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_riskscope"))
        .args(args)
        .current_dir(workspace())
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok_json(args: &[&str]) -> Value {
    let out = riskscope(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

#[test]
fn synth_train_explain_recommend() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("cohort.csv");
    let model = dir.path().join("model.json");
    let (csv_s, model_s) = (csv.to_str().unwrap(), model.to_str().unwrap());

    let out = riskscope(&["synth", "--n", "200", "--seed", "5", "--out", csv_s]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("Pregnancies,Glucose,BloodPressure,SkinThickness,Insulin,BMI,DiabetesPedigreeFunction,Age,Outcome"));
    assert_eq!(text.lines().count(), 201);

    let out = riskscope(&["train", "--data", csv_s, "--out", model_s, "--trees", "20"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("held-out accuracy"));
    let saved: Value = serde_json::from_str(&std::fs::read_to_string(&model).unwrap()).unwrap();
    assert_eq!(saved["trees"].as_array().unwrap().len(), 20);

    let report = ok_json(&["explain", "--model", model_s, "--data", csv_s, "--patient", "3", "--seed", "1"]);
    assert_eq!(report["k"], 4);
    assert_eq!(report["candidates"].as_array().unwrap().len(), 5);
    let again = ok_json(&["explain", "--model", model_s, "--data", csv_s, "--patient", "3", "--seed", "1"]);
    assert_eq!(report, again);

    let ranges = ok_json(&["ranges", "--model", model_s, "--data", csv_s, "--class", "1"]);
    assert_eq!(ranges["features"].as_array().unwrap().len(), 8);
    let ranges = ok_json(&["ranges", "--model", model_s, "--data", csv_s, "--patient", "3"]);
    assert_eq!(ranges["features"].as_array().unwrap().len(), 4);

    let plan = ok_json(&["recommend", "--model", model_s, "--data", csv_s, "--patient", "3"]);
    assert!(plan["status"].is_string());
}

#[test]
fn bundled_defaults_resolve() {
    let plan = ok_json(&["recommend", "--model", "data/model.json", "--patient", "39"]);
    assert!(plan["status"].is_string());
}

#[test]
fn unknown_patient_fails_cleanly() {
    let out = riskscope(&["recommend", "--model", "data/model.json", "--patient", "99999"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("patient 99999 not found"));
}

#[test]
fn kb_lint_accepts_bundled_and_rejects_edits() {
    let out = riskscope(&["kb-lint", "data/evidence_kb.json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("verified"));

    let dir = tempfile::tempdir().unwrap();
    let edited = dir.path().join("kb.json");
    let text = std::fs::read_to_string(workspace().join("data/evidence_kb.json")).unwrap();
    std::fs::write(&edited, text.replacen("strongest modifiable", "main modifiable", 1)).unwrap();
    let edited_s = edited.to_str().unwrap();
    let out = riskscope(&["kb-lint", edited_s]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("checksum"));

    let out = riskscope(&["kb-lint", edited_s, "--write-checksum"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(riskscope(&["kb-lint", edited_s]).status.success());
}

#[test]
fn calibrate_reproduces_the_bundled_threshold() {
    let cfg = ok_json(&["calibrate", "--corpus", "data/prompt_corpus.json", "--labeled", "data/calibration_set.json"]);
    let bundled: Value =
        serde_json::from_str(&std::fs::read_to_string(workspace().join("data/router_config.json")).unwrap()).unwrap();
    assert_eq!(cfg, bundled);
}

use std::process::{Command, Output};

fn sumboost(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sumboost")).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn estimate_cost_prints_tokens_and_dollars() {
    let out = sumboost(&["estimate-cost", "--n", "175", "--t", "30", "--r", "20"]);
    assert!(out.status.success());
    assert_eq!(stdout(&out), "total_tokens,dollar_cost\n12364050,24.7281\n");
}

#[test]
fn estimate_passes_both_modes() {
    let out = sumboost(&["estimate-passes", "--mode", "finetune", "--count", "20", "--per", "175"]);
    assert_eq!(stdout(&out).trim(), "7000");
    let out = sumboost(&["estimate-passes", "--mode", "boost", "--count", "50", "--per", "25"]);
    assert_eq!(stdout(&out).trim(), "1250");
}

#[test]
fn exit_codes_follow_error_class() {
    assert_eq!(sumboost(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(sumboost(&["estimate-cost", "--n", "0", "--t", "1", "--r", "1"]).status.code(), Some(2));
    let missing = sumboost(&["--backend", "mock:/nonexistent.json", "evaluate", "--data", "/nonexistent.csv", "--meta", "/nonexistent.json"]);
    assert_eq!(missing.status.code(), Some(3));
    assert_eq!(
        sumboost(&["--backend", "carrier-pigeon", "estimate-passes", "--mode", "boost", "--count", "1", "--per", "1"]).status.code(),
        Some(0),
        "commands that never call a model ignore the backend"
    );
}

#[test]
fn unreachable_provider_is_a_provider_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_string_lossy().into_owned();
    assert!(sumboost(&["synth", "--rows", "30", "--out-dir", &d]).status.success());
    let config = dir.path().join("config.toml");
    std::fs::write(&config, "[client]\nmax_retries = 1\nbackoff_ms = 0\n").unwrap();
    let out = sumboost(&[
        "--config",
        &config.to_string_lossy(),
        "--base-url",
        "http://127.0.0.1:9",
        "evaluate",
        "--data",
        &format!("{d}/data.csv"),
        "--meta",
        &format!("{d}/meta.json"),
        "--template-file",
        &format!("{d}/template.txt"),
        "--methods",
        "zero-shot",
    ]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn malformed_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "[run]\nseeds = \"many\"\n").unwrap();
    let out = sumboost(&["--config", &config.to_string_lossy(), "estimate-passes", "--mode", "boost", "--count", "1", "--per", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn predict_writes_one_line_per_row() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_string_lossy().into_owned();
    assert!(sumboost(&["synth", "--rows", "40", "--out-dir", &d]).status.success());
    let mock = format!("mock:{d}/oracle.json");
    let common = ["--data", &format!("{d}/data.csv"), "--meta", &format!("{d}/meta.json")].map(String::from);
    let model = format!("{d}/model.json");
    let mut train = vec!["--backend", &mock, "train", "--template-file"];
    let template = format!("{d}/template.txt");
    train.push(&template);
    train.extend(common.iter().map(String::as_str));
    train.extend(["--rounds", "3", "--model-out", &model]);
    let out = sumboost(&train);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut predict = vec!["--backend", &mock, "predict", "--model", &model];
    predict.extend(common.iter().map(String::as_str));
    let out = sumboost(&predict);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 41);
    assert!(text.starts_with("row,prediction,label\n"));
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn idil(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_idil"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("train.json");
    fs::write(
        &path,
        r#"{"schema_version": 1, "n_intents": 2, "max_explore_steps": 2000, "eval_every": 1000}"#,
    )
    .unwrap();
    path
}

#[test]
fn toy_generate_train_decode_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = idil(&[
        "generate-demos",
        "--env",
        "toy",
        "--count",
        "20",
        "--labels",
        "0.2",
        "--out",
        p(d),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in [
        "toy.train.jsonl",
        "toy.test.jsonl",
        "toy.intents.jsonl",
        "toy.env.json",
    ] {
        assert!(d.join(f).exists(), "missing {f}");
    }

    let cfg = write_config(d);
    let run = d.join("run");
    let out = idil(&[
        "train",
        "--algo",
        "idil",
        "--env",
        "toy",
        "--demos",
        p(&d.join("toy.train.jsonl")),
        "--config",
        p(&cfg),
        "--test",
        p(&d.join("toy.test.jsonl")),
        "--test-truth",
        p(&d.join("toy.intents.jsonl")),
        "--out",
        p(&run),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["config.json", "model.json", "log.csv", "final_metrics.json"] {
        assert!(run.join(f).exists(), "missing {f}");
    }
    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join("final_metrics.json")).unwrap()).unwrap();
    let acc = metrics["intent_accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));

    let decoded = d.join("decoded.jsonl");
    let out = idil(&[
        "decode",
        "--model",
        p(&run.join("model.json")),
        "--demos",
        p(&d.join("toy.test.jsonl")),
        "--out",
        p(&decoded),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_to_string(&decoded).unwrap().lines().count(), 10);

    let eval = d.join("eval");
    let out = idil(&[
        "evaluate",
        "--model",
        p(&run.join("model.json")),
        "--env",
        "toy",
        "--algo",
        "idil",
        "--test",
        p(&d.join("toy.test.jsonl")),
        "--truth",
        p(&d.join("toy.intents.jsonl")),
        "--dump-per-intent",
        "3",
        "--out",
        p(&eval),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(eval.join("metrics.csv")).unwrap();
    assert!(csv.starts_with("algo,env,seed,mean_reward,reward_std,intent_accuracy,alignment"));
    for x in 0..2 {
        let dump = fs::read_to_string(eval.join(format!("behavior_intent_{x}.jsonl"))).unwrap();
        assert_eq!(dump.lines().count(), 3);
    }
}

#[test]
fn baseline_models_cannot_decode() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(
        code(&idil(&[
            "generate-demos",
            "--env",
            "toy",
            "--count",
            "10",
            "--out",
            p(d)
        ])),
        0
    );
    let run = d.join("bc");
    let out = idil(&[
        "train",
        "--algo",
        "bc",
        "--env",
        "toy",
        "--demos",
        p(&d.join("toy.train.jsonl")),
        "--out",
        p(&run),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let out = idil(&[
        "decode",
        "--model",
        p(&run.join("model.json")),
        "--demos",
        p(&d.join("toy.test.jsonl")),
        "--out",
        p(&d.join("x.jsonl")),
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn invalid_input_exits_one() {
    assert_eq!(
        code(&idil(&[
            "train", "--algo", "nope", "--env", "toy", "--demos", "x", "--out", "y"
        ])),
        1
    );
    assert_eq!(
        code(&idil(&["generate-demos", "--env", "moon", "--out", "/tmp"])),
        1
    );
    assert_eq!(code(&idil(&["frobnicate"])), 1);
    assert_eq!(code(&idil(&["--help"])), 0);

    // demos recorded for a different environment
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(
        code(&idil(&[
            "generate-demos",
            "--env",
            "toy",
            "--count",
            "4",
            "--out",
            p(d)
        ])),
        0
    );
    let out = idil(&[
        "train",
        "--algo",
        "bc",
        "--env",
        "multigoals-2",
        "--demos",
        p(&d.join("toy.train.jsonl")),
        "--out",
        p(&d.join("r")),
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn oracle_check_reports_pass_and_numeric_failure() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("oracle.json");
    let out = idil(&[
        "oracle-check",
        "--env",
        "toy",
        "--random",
        "10",
        "--out",
        p(&report),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["passed"], serde_json::Value::Bool(true));

    // a truncation tolerance this loose leaves identities unmet
    let out = idil(&[
        "oracle-check",
        "--env",
        "toy",
        "--random",
        "3",
        "--tol",
        "0.5",
    ]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn run_suite_writes_summary() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("suite.json");
    fs::write(
        &cfg,
        r#"{"schema_version": 1,
            "cells": [{"env": "toy", "algo": "bc", "seeds": [0, 1]}, {"env": "toy", "algo": "idil", "seeds": [0]}],
            "defaults": {"n_demos": 10, "training": {"max_explore_steps": 1500, "eval_every": 500}}}"#,
    )
    .unwrap();
    let out_dir = d.join("out");
    let out = idil(&["run-suite", "--config", p(&cfg), "--out", p(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary = fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    assert!(out_dir
        .join("toy_bc_labels0.00")
        .join("seed_1")
        .join("config.json")
        .exists());
}

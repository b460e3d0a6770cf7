//! End-to-end command line checks: stage chaining, artifact layout, exit
//! codes, and byte-level determinism, all against a small configuration.

use std::path::Path;
use std::process::{Command, Output};

fn dwpi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dwpi"))
        .args(args)
        .output()
        .expect("spawn dwpi")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Small pipeline config rooted at `dir`.
fn write_config(dir: &Path) -> std::path::PathBuf {
    let out_dir = dir.join("out");
    let config = serde_json::json!({
        "environment": { "name": "cdst" },
        "grid_step": 0.1,
        "train": {
            "episodes": 3000,
            "alpha": 1.0,
            "epsilon_start": 1.0,
            "epsilon_end": 0.05,
            "discount": 0.9999,
            "seed": 0
        },
        "noise_eta": 0.0,
        "demos": { "count": 40, "episodes_per_sample": 1, "fractions": [0.7, 0.15, 0.15] },
        "fit": {
            "batch_size": 8,
            "learning_rate": 0.05,
            "max_epochs": 30,
            "patience": 10,
            "loss_kind": "squared-l2",
            "seed": 0
        },
        "baseline": {
            "iterations": 3,
            "inner": {
                "episodes": 500,
                "alpha": 1.0,
                "epsilon_start": 1.0,
                "epsilon_end": 0.05,
                "discount": 0.9999,
                "seed": 0
            },
            "mwal_beta": 0.5,
            "tolerance": 1e-6
        },
        "eval": { "max_queries": 3 },
        "out_dir": out_dir,
        "master_seed": 5
    });
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

#[test]
fn full_pipeline_runs_and_leaves_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let cfg = cfg.to_str().unwrap();
    let out = tmp.path().join("out");

    let r = dwpi(&["train-agent", "--config", cfg]);
    assert_eq!(code(&r), 0, "train-agent: {}", stderr(&r));
    assert!(out.join("agent.dwqt").is_file());
    assert!(out.join("agent.dwqt.json").is_file());
    assert!(stdout(&r).contains("oracle match"));

    let r = dwpi(&["gen-demos", "--config", cfg]);
    assert_eq!(code(&r), 0, "gen-demos: {}", stderr(&r));
    assert!(out.join("demos.jsonl").is_file());

    let r = dwpi(&["train-dwpi", "--config", cfg]);
    assert_eq!(code(&r), 0, "train-dwpi: {}", stderr(&r));
    assert!(out.join("model.dwpm").is_file());
    assert!(out.join("loss_history.json").is_file());

    let model = out.join("model.dwpm");
    let r = dwpi(&[
        "infer",
        "--model",
        model.to_str().unwrap(),
        "--features",
        "[30.0, -13.0]",
    ]);
    assert_eq!(code(&r), 0, "infer: {}", stderr(&r));
    let parsed: serde_json::Value = serde_json::from_str(stdout(&r).trim()).unwrap();
    assert_eq!(parsed["raw"].as_array().unwrap().len(), 2);
    assert_eq!(parsed["snapped"].as_array().unwrap().len(), 2);
    assert!(parsed["snapped_index"].is_u64());

    let r = dwpi(&["baseline", "pm", "--config", cfg, "--features", "[30.0, -13.0]"]);
    assert_eq!(code(&r), 0, "baseline pm: {}", stderr(&r));
    let parsed: serde_json::Value = serde_json::from_str(stdout(&r).trim()).unwrap();
    assert_eq!(parsed["inferred"].as_array().unwrap().len(), 2);
    assert!(parsed["wall_clock"].as_f64().unwrap() > 0.0);

    let r = dwpi(&["eval", "--config", cfg]);
    assert_eq!(code(&r), 0, "eval: {}", stderr(&r));
    for name in ["report.json", "metrics.csv", "timing.csv"] {
        assert!(out.join(name).is_file(), "missing {name}");
    }
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("environment,method,regime,metric,value,queries"));
}

#[test]
fn gen_demos_is_byte_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let cfg = cfg.to_str().unwrap();
    let out = tmp.path().join("out");
    assert_eq!(code(&dwpi(&["train-agent", "--config", cfg])), 0);
    assert_eq!(code(&dwpi(&["gen-demos", "--config", cfg])), 0);
    let first = std::fs::read(out.join("demos.jsonl")).unwrap();
    assert_eq!(code(&dwpi(&["gen-demos", "--config", cfg])), 0);
    let second = std::fs::read(out.join("demos.jsonl")).unwrap();
    assert_eq!(first, second);
}

#[test]
fn seed_override_changes_demos() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let cfg = cfg.to_str().unwrap();
    let out = tmp.path().join("out");
    assert_eq!(code(&dwpi(&["train-agent", "--config", cfg])), 0);
    assert_eq!(code(&dwpi(&["gen-demos", "--config", cfg])), 0);
    let first = std::fs::read(out.join("demos.jsonl")).unwrap();
    assert_eq!(code(&dwpi(&["gen-demos", "--config", cfg, "--seed", "6"])), 0);
    let second = std::fs::read(out.join("demos.jsonl")).unwrap();
    assert_ne!(first, second);
}

#[test]
fn usage_errors_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.json");
    let r = dwpi(&["train-agent", "--config", missing.to_str().unwrap()]);
    assert_eq!(code(&r), 1);
    assert!(stderr(&r).contains("error"));

    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, "{\"grid_step\": \"fast\"}").unwrap();
    let r = dwpi(&["train-agent", "--config", bad.to_str().unwrap()]);
    assert_eq!(code(&r), 1);

    let r = dwpi(&["--definitely-not-a-flag"]);
    assert_eq!(code(&r), 1);
}

#[test]
fn help_and_version_exit_0() {
    assert_eq!(code(&dwpi(&["--help"])), 0);
    assert_eq!(code(&dwpi(&["--version"])), 0);
    assert_eq!(code(&dwpi(&["eval", "--help"])), 0);
}

#[test]
fn runtime_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let cfg_s = cfg.to_str().unwrap();

    // Missing agent artifact.
    let r = dwpi(&["gen-demos", "--config", cfg_s]);
    assert_eq!(code(&r), 2, "{}", stderr(&r));

    // Corrupt model artifact.
    let model = tmp.path().join("model.dwpm");
    std::fs::write(&model, b"DWPMgarbage").unwrap();
    let r = dwpi(&["infer", "--model", model.to_str().unwrap(), "--features", "[1.0, 2.0]"]);
    assert_eq!(code(&r), 2, "{}", stderr(&r));

    // Corrupt demo line.
    assert_eq!(code(&dwpi(&["train-agent", "--config", cfg_s])), 0);
    assert_eq!(code(&dwpi(&["gen-demos", "--config", cfg_s])), 0);
    let demos = tmp.path().join("out/demos.jsonl");
    let mut text = std::fs::read_to_string(&demos).unwrap();
    text.push_str("not json\n");
    std::fs::write(&demos, text).unwrap();
    let r = dwpi(&["train-dwpi", "--config", cfg_s]);
    assert!(code(&r) == 1 || code(&r) == 2, "got {}: {}", code(&r), stderr(&r));
}

#[test]
fn malformed_features_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let model = tmp.path().join("model.dwpm");
    std::fs::write(&model, b"").unwrap();
    let r = dwpi(&["infer", "--model", model.to_str().unwrap(), "--features", "banana"]);
    assert_eq!(code(&r), 1, "{}", stderr(&r));
}

//! End-to-end runs of the `avgmdp` binary.

use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn models() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

fn avgmdp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_avgmdp")).args(args).env_remove("AVGMDP_SEED").output().unwrap()
}

fn json_of(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn model(name: &str) -> String {
    models().join(name).to_string_lossy().into_owned()
}

#[test]
fn solve_reports_gaps() {
    let v = json_of(&avgmdp(&["solve", "--model", &model("discontinuous_gaps_0.1.json")]));
    let want = [("1,go", 1.2), ("2,back", 0.0), ("1,loop", 0.0), ("2,loop", 0.1)];
    for (pair, gap) in want {
        let got = v["gaps"][pair].as_f64().unwrap();
        assert!((got - gap).abs() < 1e-8, "{pair}: {got}");
    }
    assert!((v["gain"].as_f64().unwrap() - 0.6).abs() < 1e-9);
}

#[test]
fn lower_bound_matches_closed_form() {
    let v = json_of(&avgmdp(&["lower-bound", "--model", &model("regret_discontinuity.json")]));
    let kl = 0.1 * (0.1f64 / 0.5).ln() + 0.9 * (0.9f64 / 0.5).ln();
    let value = v["value"].as_f64().unwrap();
    assert!((value / (0.4 / kl) - 1.0).abs() < 0.01, "{value}");
}

#[test]
fn output_is_stable_and_file_output_matches() {
    let args = ["level", "--model", &model("leveling_original.json"), "--epsilon", "0.05"];
    let a = avgmdp(&args);
    let b = avgmdp(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("level.json");
    let mut with_out = args.to_vec();
    let file_arg = file.to_string_lossy().into_owned();
    with_out.extend(["--out", &file_arg]);
    let c = avgmdp(&with_out);
    assert!(c.status.success() && c.stdout.is_empty());
    assert_eq!(std::fs::read(&file).unwrap(), a.stdout);
    let pretty = avgmdp(&[&args[..], &["--pretty"]].concat());
    let parsed: Value = serde_json::from_slice(&pretty.stdout).unwrap();
    assert_eq!(parsed, json_of(&a));
}

#[test]
fn validation_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"name": "x", "states": ["1"], "actions": {"1": ["a"]}, "kernel": {"1,a": [0.5]}, "reward": {"1,a": 0.5}}"#)
        .unwrap();
    let bad = bad.to_string_lossy().into_owned();
    let cases: Vec<Vec<&str>> = vec![
        vec!["solve", "--model", &bad],
        vec!["solve", "--model", "/nonexistent/model.json"],
        vec!["solve", "--model", "m.json", "--bogus"],
        vec!["level", "--model", "m.json"],
    ];
    for args in &cases {
        let out = avgmdp(args);
        assert_eq!(out.status.code(), Some(1), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(!out.stderr.is_empty());
    }
    let m = model("regret_discontinuity.json");
    for args in [
        vec!["level", "--model", &m, "--epsilon", "-1"],
        vec!["lower-bound", "--model", &m, "--eflat", "0.1"],
        vec!["lower-bound", "--model", &m, "--eflat", "2", "--eunif", "0", "--ereg", "0.1"],
        vec!["verify", "--trials", "0"],
    ] {
        assert_eq!(avgmdp(&args).status.code(), Some(1), "{args:?}");
    }
    assert_eq!(avgmdp(&["--help"]).status.code(), Some(0));
}

#[test]
fn run_uses_the_seed_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.json");
    let config = serde_json::json!({
        "model": model("regret_discontinuity.json"),
        "learners": [{"algo": "uniform"}],
        "horizon": 500,
        "seeds": [],
        "out_dir": dir.path().join("out"),
    });
    std::fs::write(&cfg, config.to_string()).unwrap();
    let cfg = cfg.to_string_lossy().into_owned();
    let run = |seed: &str| {
        Command::new(env!("CARGO_BIN_EXE_avgmdp")).args(["run", "--config", &cfg, "--jobs", "1"]).env("AVGMDP_SEED", seed).output().unwrap()
    };
    let v = json_of(&run("17"));
    assert_eq!(v["seeds"], serde_json::json!([17]));
    let hash = v["learners"][0]["config_hash"].as_str().unwrap().to_string();
    let trace = dir.path().join("out").join(format!("trace_uniform_{hash}_17.csv"));
    let text = std::fs::read_to_string(&trace).unwrap();
    assert!(text.starts_with("t,state,action,reward,next_state,phase,class\n"));
    assert_eq!(text.lines().count(), 501);
    assert!(dir.path().join("out/summary.json").is_file());
    assert_eq!(run("not-a-number").status.code(), Some(1));
}

//! The `supervise` binary: flags, outputs and exit codes.

use std::path::PathBuf;
use std::process::{Command, Output};

fn supervise(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_supervise"))
        .args(args)
        .output()
        .unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("supervise-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn runs_a_path_batch_to_stdout() {
    let out = supervise(&[
        "--app",
        "path",
        "--n",
        "50",
        "--beta",
        "0.1",
        "--trials",
        "3",
        "--strategy",
        "AlwaysReject",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["trials"].as_array().unwrap().len(), 3);
    assert_eq!(v["config"]["strategy"]["name"], "AlwaysReject");
    assert_eq!(v["pass"], true);
}

#[test]
fn config_file_with_overrides_and_csv() {
    let cfg = scratch("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"app":"mergesort","n":8,"m":128,"beta":0.05,"seeds":[1,2],"strategy":{"name":"count-cheat"}}"#,
    )
    .unwrap();
    let out_path = scratch("out.csv");
    let out = supervise(&[
        "--config",
        cfg.to_str().unwrap(),
        "--seeds",
        "0..3,10",
        "--format",
        "csv",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(out_path).unwrap();
    let seeds: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(seeds, ["0", "1", "2", "10", ""]);
}

#[test]
fn failing_verdicts_exit_with_one() {
    let cfg = scratch("strict.json");
    std::fs::write(&cfg, r#"{"app":"path","n":20,"ceilings":{"max_rounds":5}}"#).unwrap();
    let out = supervise(&["--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("max_rounds"));
}

#[test]
fn bad_input_exits_with_two() {
    let out = supervise(&["--app", "matmul", "--n", "8", "--m", "64"]);
    assert_eq!(out.status.code(), Some(2));
    let out = supervise(&["--app", "path", "--strategy", "nope"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn dumps_graph_and_trace() {
    let (graph, trace) = (scratch("graph.json"), scratch("trace.jsonl"));
    let out = supervise(&[
        "--app",
        "matmul",
        "--n",
        "4",
        "--m",
        "8",
        "--tau",
        "3",
        "--beta",
        "0",
        "--dump-graph",
        graph.to_str().unwrap(),
        "--trace",
        trace.to_str().unwrap(),
        "--check-invariants",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let g: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(graph).unwrap()).unwrap();
    assert!(g["tasks"]
        .as_array()
        .unwrap()
        .iter()
        .any(|t| t["kind"]["type"] == "Multiply"));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let rounds = v["trials"][0]["rounds"].as_u64().unwrap();
    assert_eq!(std::fs::read_to_string(trace).unwrap().lines().count() as u64, rounds);
}

#[test]
fn lists_strategies() {
    let out = supervise(&["--list-strategies"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 8);
    assert!(text.contains("count-cheat"));
}

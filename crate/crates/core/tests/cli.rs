mod common;

use std::path::Path;
use std::process::{Command, Output};

use fsm_irl::bench::Report;
use fsm_irl::{Role, SplitAssignment};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fsm-irl"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fail(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    String::from_utf8(out.stderr).unwrap()
}

#[test]
fn citation_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    common::write_citation_export(d, 140, 30, 7, 300, 5);

    ok(d, &["convert", "--content", "cora.content", "--cites", "cora.cites", "--out", "data"]);
    for f in ["nodes.tsv", "edges.tsv", "classes.tsv"] {
        assert!(d.join("data").join(f).exists(), "{f} missing");
    }
    let graph = ["--nodes", "data/nodes.tsv", "--edges", "data/edges.tsv"];

    let cfg = d.join("small.toml");
    std::fs::write(&cfg, "[split]\nvalidation = 20\ntest = 40\n[train]\nepochs = 3\nbatch_size = 20\nhidden = 8\n").unwrap();
    let mut args = vec!["split", "--config", "small.toml", "--level", "medium", "--per-class", "3", "--out", "run"];
    args.extend(graph);
    let printed = ok(d, &args);
    assert!(printed.contains("mean homogeneity"));
    let split = SplitAssignment::read(&d.join("run/split.tsv")).unwrap();
    assert_eq!(split.nodes(Role::Train).len(), 21);
    assert_eq!(split.nodes(Role::Validation).len(), 20);
    assert_eq!(split.nodes(Role::Test).len(), 40);

    let mut args = vec!["shift", "--delete-edges", "0.5", "--seed", "3", "--out", "shifted"];
    args.extend(graph);
    ok(d, &args);
    let kept = std::fs::read_to_string(d.join("shifted/edges.tsv")).unwrap().lines().count();
    let all = std::fs::read_to_string(d.join("data/edges.tsv")).unwrap().lines().count();
    assert!(kept < all);

    let mut args = vec!["train", "--config", "small.toml", "--split", "run/split.tsv", "--export-profiles", "run/profiles.json", "--out", "run"];
    args.extend(graph);
    ok(d, &args);
    for f in ["model.json", "history.csv", "profiles.json"] {
        assert!(d.join("run").join(f).exists(), "{f} missing");
    }

    let mut args = vec!["eval", "--split", "run/split.tsv", "--model", "run/model.json", "--out", "run"];
    args.extend(graph);
    ok(d, &args);
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("run/metrics.json")).unwrap()).unwrap();
    let acc = metrics["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));

    let mut args = vec!["bench", "--config", "small.toml", "--shift", "bias:big", "--seeds", "0,1", "--out", "bench"];
    args.extend(graph);
    let table = ok(d, &args);
    for model in ["GraphSAGE", "CA-GraphSAGE", "HSIC-GraphSAGE", "FSM-IRL"] {
        assert!(table.contains(model), "{model} row missing");
    }
    let report = Report::read(&d.join("bench/report.json")).unwrap();
    assert_eq!(report.runs.len(), 2 * 4 * 2);

    let shown = ok(d, &["report", "bench/report.json"]);
    assert!(shown.contains("FSM-IRL"));
    ok(d, &["report", "bench/report.json", "--format", "csv", "--out", "converted"]);
    let csv = std::fs::read_to_string(d.join("converted/report.csv")).unwrap();
    assert_eq!(csv, std::fs::read_to_string(d.join("bench/report.csv")).unwrap());
}

#[test]
fn synth_writes_all_files_and_json_config_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("c.json"),
        r#"{"shift": {"kind": "synthetic", "seed": 1, "blocks": 2, "nodes_per_block": 20}}"#,
    )
    .unwrap();
    ok(d, &["synth", "--config", "c.json", "--out", "s"]);
    for f in ["nodes.tsv", "edges.tsv", "split.tsv", "test_edges.tsv"] {
        assert!(d.join("s").join(f).exists(), "{f} missing");
    }
    let nodes = std::fs::read_to_string(d.join("s/nodes.tsv")).unwrap();
    assert_eq!(nodes.lines().skip(1).count(), 40);
}

#[test]
fn errors_exit_nonzero_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let err = fail(d, &["train", "--nodes", "missing.tsv", "--edges", "missing.tsv", "--split", "x.tsv"]);
    assert!(err.contains("missing.tsv"), "{err}");

    std::fs::write(d.join("bad.toml"), "[train]\nlearning_rate = -1.0\n").unwrap();
    let err = fail(d, &["bench", "--config", "bad.toml"]);
    assert!(err.starts_with("error:"), "{err}");

    let err = fail(d, &["bench", "--shift", "bias:enormous"]);
    assert!(err.starts_with("error:"), "{err}");

    let err = fail(d, &["report", "nope.json"]);
    assert!(err.contains("nope.json"), "{err}");
}

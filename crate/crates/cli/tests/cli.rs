use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn adascope(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adascope"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> serde_json::Value {
    let out = adascope(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

const SPEC: &str = r#"{"mu1": [1, 0, 0], "mu2": [-1, 0, 0],
 "subgroups": [{"p": 0.9, "prior": 0.5}, {"p": 0.1, "prior": 0.5}],
 "nodes_per_class": 80, "avg_degree": 5}"#;

const CONFIG: &str = r#"{"data": {"dataset": "data/manifest.json"}, "l_max": 2,
 "model": {"hidden": 8, "max_epochs": 40}, "scope": {"hidden": 8, "max_epochs": 20}}"#;

fn workspace() -> tempfile::TempDir {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("spec.json"), SPEC).unwrap();
    fs::write(tmp.path().join("cfg.json"), CONFIG).unwrap();
    let v = ok(
        tmp.path(),
        &["generate-csbm", "--spec", "spec.json", "--out", "data"],
    );
    assert_eq!(v["num_nodes"], 160);
    tmp
}

#[test]
fn generated_dataset_passes_ingest_check() {
    let tmp = workspace();
    let v = ok(
        tmp.path(),
        &["ingest-check", "--data", "data/manifest.json"],
    );
    assert_eq!(v["num_nodes"], 160);
    assert_eq!(v["num_features"], 3);
    assert_eq!(v["num_classes"], 2);
    assert_eq!(v["directed"], false);
}

#[test]
fn stage_verbs_chain() {
    let tmp = workspace();
    let d = tmp.path();
    let cfg = ["--config", "cfg.json", "--out", "run", "--seed", "3"];
    let with = |verb: &str, extra: &[&str]| {
        let mut args = vec![verb];
        args.extend(extra);
        args.extend(cfg);
        ok(d, &args)
    };
    let fam = with("train-family", &[]);
    assert_eq!(fam["val_accuracy"].as_array().unwrap().len(), 3);
    let enc = with("encode", &[]);
    assert_eq!(enc["columns"], 6);
    let labels = with("build-labels", &[]);
    assert_eq!(labels["nodes"], 120);
    with(
        "train-as",
        &["--eta", "1", "--inputs", "xi,x,zeta", "--tau", "2"],
    );
    let pred = with("predict-as", &[]);
    assert!(pred["routed_accuracy"].as_f64().unwrap() <= pred["oracle_accuracy"].as_f64().unwrap());
    let hist: u64 = pred["depth_histogram"]
        .as_array()
        .unwrap()
        .iter()
        .map(|h| h.as_u64().unwrap())
        .sum();
    assert_eq!(hist, 40);
    let oracle = with("oracle", &["--ensemble", "2"]);
    let curve: Vec<f64> = oracle["oracle_curve"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert_eq!(curve.len(), 3);
    assert!(curve.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(oracle["ensemble_curve"].as_array().unwrap().len(), 2);

    let nodes = fs::read_to_string(d.join("run/node_depths.csv")).unwrap();
    assert_eq!(nodes.lines().count(), 41);
    let rows = fs::read_to_string(d.join("run/scope-labels.csv")).unwrap();
    assert!(rows.starts_with("node,d0,d1,d2\n"));
    assert!(d.join("run/family/depth2.json").is_file());
    assert!(d.join("run/encoding-legend.json").is_file());
}

#[test]
fn train_gnn_writes_checkpoint_and_logits() {
    let tmp = workspace();
    let v = ok(
        tmp.path(),
        &[
            "train-gnn",
            "--data",
            "data/manifest.json",
            "--arch",
            "gcn",
            "--depth",
            "2",
            "--out",
            "gnn",
        ],
    );
    assert!(v["best_val_accuracy"].as_f64().unwrap() > 0.0);
    for f in [
        "model.json",
        "model.bin",
        "logits.json",
        "logits.bin",
        "train-gnn.json",
    ] {
        assert!(tmp.path().join("gnn").join(f).is_file(), "{f}");
    }
}

#[test]
fn pipeline_verb_writes_report() {
    let tmp = workspace();
    let v = ok(
        tmp.path(),
        &[
            "pipeline", "--config", "cfg.json", "--seeds", "0,1", "--out", "pipe",
        ],
    );
    assert!(v["routed"]["mean"].as_f64().unwrap() <= v["oracle"]["mean"].as_f64().unwrap());
    let curves = fs::read_to_string(tmp.path().join("pipe/curves.csv")).unwrap();
    assert_eq!(curves.lines().count(), 4);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("pipe/report.json")).unwrap())
            .unwrap();
    assert_eq!(report["seeds"].as_array().unwrap().len(), 2);
}

#[test]
fn theory_check_writes_curves_and_verdicts() {
    let tmp = workspace();
    let v = ok(
        tmp.path(),
        &[
            "theory-check",
            "--spec",
            "spec.json",
            "--lrange",
            "1:3",
            "--seeds",
            "2",
            "--out",
            "theory",
        ],
    );
    assert_eq!(v["best_depth_per_seed"].as_array().unwrap().len(), 2);
    let csv = fs::read_to_string(tmp.path().join("theory/gap_curves.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(tmp.path().join("theory/theory.json").is_file());
}

#[test]
fn exit_codes() {
    let tmp = workspace();
    let d = tmp.path();
    assert_eq!(
        adascope(d, &["ingest-check", "--data", "missing.json"])
            .status
            .code(),
        Some(4)
    );
    assert_eq!(adascope(d, &["ingest-check"]).status.code(), Some(2));
    assert_eq!(
        adascope(
            d,
            &["train-as", "--data", "data/manifest.json", "--eta", "0.5"]
        )
        .status
        .code(),
        Some(2)
    );
    fs::write(
        d.join("deep.json"),
        r#"{"data": {"dataset": "data/manifest.json"}, "l_max": 12}"#,
    )
    .unwrap();
    assert_eq!(
        adascope(d, &["pipeline", "--config", "deep.json"])
            .status
            .code(),
        Some(2)
    );
    fs::write(
        d.join("hot.json"),
        r#"{"data": {"dataset": "data/manifest.json"}, "model": {"lr": 1e200, "hidden": 8}}"#,
    )
    .unwrap();
    assert_eq!(
        adascope(d, &["train-gnn", "--config", "hot.json", "--depth", "1"])
            .status
            .code(),
        Some(3)
    );
    assert_eq!(
        adascope(
            d,
            &[
                "predict-as",
                "--data",
                "data/manifest.json",
                "--out",
                "empty"
            ]
        )
        .status
        .code(),
        Some(4)
    );
}

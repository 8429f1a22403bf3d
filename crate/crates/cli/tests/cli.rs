use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_causaltrade"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin()
        .args(["--quiet", "--seed", "7"])
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn schema_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas")
}

fn assert_valid(schema: &str, doc: &Value) {
    let schema: Value =
        serde_json::from_str(&fs::read_to_string(schema_dir().join(format!("{schema}.schema.json"))).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    let errors: Vec<String> = validator.iter_errors(doc).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{schema}: {errors:?}\n{doc:#}");
}

fn json_file(p: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn simulated() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &["simulate", "--nodes", "8", "--interventional", "3", "--n", "2000"],
    );
    dir
}

const DATA: [&str; 4] = ["--data", "runs.csv", "--config", "study.json"];

#[test]
fn simulate_writes_artifacts() {
    let dir = simulated();
    let d = dir.path();
    for f in ["runs.csv", "truth.json", "study.json", "scm.json"] {
        assert!(d.join(f).is_file(), "{f}");
    }
    let header = fs::read_to_string(d.join("runs.csv")).unwrap();
    assert!(header.starts_with("T1,T2,T3,X1,X2,X3,X4,X5\n"));
    assert_eq!(header.lines().count(), 2001);
    assert_valid("graph", &json_file(d.join("truth.json")));
    assert_valid("study", &json_file(d.join("study.json")));
    assert_valid("scm", &json_file(d.join("scm.json")));
    // No temporary files are left behind by atomic writes.
    assert!(fs::read_dir(d)
        .unwrap()
        .all(|e| !e.unwrap().file_name().to_string_lossy().starts_with('.')));
}

#[test]
fn discover_then_compare_with_truth() {
    let dir = simulated();
    let d = dir.path();
    ok(
        d,
        &[&["discover"][..], &DATA, &["--out", "graph.json", "--dot", "graph.dot"]].concat(),
    );
    assert_valid("graph", &json_file(d.join("graph.json")));
    assert!(fs::read_to_string(d.join("graph.dot")).unwrap().starts_with("digraph"));

    let out = ok(d, &["compare", "graph.json", "truth.json"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_valid("compare", &v);
    for key in ["false_edge_rate", "missing_edge_rate"] {
        let r = v["accuracy"][key].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&r), "{key} {r}");
    }

    let out = ok(d, &[&["score"][..], &DATA, &["--graph", "graph.json"]].concat());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_valid("score", &v);
    assert!(v["score"].as_f64().unwrap().is_finite());
}

#[test]
fn ate_tradeoff_select_outputs_validate() {
    let dir = simulated();
    let d = dir.path();
    let out = ok(
        d,
        &[
            &["ate"][..],
            &DATA,
            &[
                "--graph",
                "truth.json",
                "--treatment",
                "T1",
                "--outcome",
                "X1",
                "--x1",
                "1",
                "--x2",
                "0",
            ],
        ]
        .concat(),
    );
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_valid("ate", &v);
    assert_eq!(v["ate"], v["theta"]);

    ok(
        d,
        &[
            &["tradeoff"][..],
            &DATA,
            &[
                "--graph",
                "truth.json",
                "--methods",
                "T1,T2",
                "--pairs",
                "X1:X2",
                "--out",
                "report.json",
                "--dot",
                "report.dot",
            ],
        ]
        .concat(),
    );
    let report = json_file(d.join("report.json"));
    assert_valid("tradeoff-report", &report);
    assert_eq!(report["pairs"][0]["methods"].as_array().unwrap().len(), 2);

    fs::write(d.join("objective.json"), r#"{"terms":[{"metric":"X1","weight":1}]}"#).unwrap();
    assert_valid("objective", &json_file(d.join("objective.json")));
    let out = ok(
        d,
        &[
            &["select"][..],
            &DATA,
            &[
                "--graph",
                "truth.json",
                "--objective",
                "objective.json",
                "--max-active",
                "1",
            ],
        ]
        .concat(),
    );
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_valid("selection-plan", &v);
    let active = v["assignments"]
        .as_object()
        .unwrap()
        .values()
        .filter(|r| r.as_f64() != Some(0.0))
        .count();
    assert!(active <= 1);
}

#[test]
fn metrics_emits_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("preds.csv"),
        "sensitive,label,prediction,f1\n1,1,1,0.0\n1,0,1,0.1\n0,1,1,5.0\n0,0,0,5.2\n",
    )
    .unwrap();
    let out = ok(d, &["metrics", "--predictions", "preds.csv", "--k", "1"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines[0], "accuracy,f1,spd,di,aod,consistency,theil");
    assert_eq!(lines.len(), 2);
    let spd: f64 = lines[1].split(',').nth(2).unwrap().parse().unwrap();
    assert_eq!(spd, -0.5);
}

#[test]
fn out_dir_receives_relative_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("nested/run");
    ok(
        dir.path(),
        &[
            "--out-dir",
            out.to_str().unwrap(),
            "simulate",
            "--nodes",
            "5",
            "--interventional",
            "1",
            "--n",
            "50",
        ],
    );
    assert!(out.join("runs.csv").is_file());
}

#[test]
fn missing_flag_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["ate", "--config", "study.json"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("--data") && err.contains("Usage"), "{err}");
}

#[test]
fn unknown_flag_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["simulate", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bad_pair_is_usage_error() {
    let dir = simulated();
    let out = run(
        dir.path(),
        &[
            &["tradeoff"][..],
            &DATA,
            &["--graph", "truth.json", "--pairs", "X1", "--out", "r.json"],
        ]
        .concat(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--pairs"));
}

#[test]
fn missing_file_is_data_error_naming_it() {
    let dir = simulated();
    let out = run(
        dir.path(),
        &[
            "score",
            "--data",
            "absent.csv",
            "--config",
            "study.json",
            "--graph",
            "truth.json",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.csv"));
}

#[test]
fn malformed_csv_names_file_row_and_column() {
    let dir = simulated();
    let d = dir.path();
    let text = fs::read_to_string(d.join("runs.csv")).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut cells: Vec<String> = lines[3].split(',').map(String::from).collect();
    cells[4] = "oops".into();
    lines[3] = cells.join(",");
    fs::write(d.join("bad.csv"), lines.join("\n")).unwrap();
    let out = run(
        d,
        &[
            "score",
            "--data",
            "bad.csv",
            "--config",
            "study.json",
            "--graph",
            "truth.json",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("bad.csv") && err.contains("X2") && err.contains("oops"),
        "{err}"
    );
}

#[test]
fn help_and_version_exit_zero() {
    let v = bin().arg("--version").output().unwrap();
    assert_eq!(v.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&v.stdout).starts_with("causaltrade "));
    let h = bin().args(["discover", "--help"]).output().unwrap();
    assert_eq!(h.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&h.stdout).contains("--max-in-degree"));
}

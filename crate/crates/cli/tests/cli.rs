use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn hhl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hhl")).args(args).env_remove("HHL_THREADS").output().expect("binary runs")
}

fn run_to(dir: &Path, name: &str, args: &[&str]) -> (i32, Value) {
    let path = dir.join(name);
    let mut all: Vec<&str> = args.to_vec();
    let p = path.to_str().unwrap();
    all.extend(["--out", p]);
    let out = hhl(&all);
    let code = out.status.code().unwrap();
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("no report at {p}: {e}; stderr: {}", String::from_utf8_lossy(&out.stderr)));
    (code, serde_json::from_str(&text).unwrap())
}

fn num(v: &Value, path: &[&str]) -> f64 {
    let mut cur = v;
    for k in path {
        cur = &cur[*k];
    }
    cur.as_f64().unwrap_or_else(|| panic!("{path:?} is not a number in {v}"))
}

const SHARP: &[&str] = &["verify", "--theorem", "1.5", "--phi", "ball-indicator", "--A", "dilation", "--n", "1", "--alpha", "0", "--p", "2", "--lambda", "-0.25"];

#[test]
fn sharpness_example_reports_four_pi_squared() {
    let dir = tempfile::tempdir().unwrap();
    let (code, v) = run_to(dir.path(), "r.json", SHARP);
    assert_eq!(code, 0);
    assert_eq!(v["schema"], 1);
    assert_eq!(v["command"], "verify");
    let ratio = num(&v, &["result", "operator_ratio"]);
    let want = 4.0 * std::f64::consts::PI.powi(2);
    assert!((ratio - want).abs() <= 1e-4 * want, "{ratio}");
    assert_eq!(v["config"]["common"]["p"], 2.0);
}

#[test]
fn constant_example() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["constant", "--id", "C3", "--phi", "ball-indicator", "--A", "dilation", "--n", "1", "--alpha", "0", "--p", "2", "--lambda", "-0.25"];
    let (code, v) = run_to(dir.path(), "c.json", &args);
    assert_eq!(code, 0);
    assert!((num(&v, &["result", "value"]) - 39.478).abs() < 1e-3);
}

#[test]
fn cmo_example() {
    let dir = tempfile::tempdir().unwrap();
    let (code, v) = run_to(dir.path(), "n.json", &["norm", "--kind", "cmo", "--b", "log-norm", "--p2", "1", "--alpha", "0", "--n", "1"]);
    assert_eq!(code, 0);
    assert!((num(&v, &["result", "value"]) - 0.18394).abs() < 1e-5);
}

#[test]
fn invalid_config_exits_2_and_cites_the_hypothesis() {
    let out = hhl(&["constant", "--id", "C4", "--p", "2", "--p1", "2", "--p2", "2", "--lambda", "-0.25"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("requires 1/p = 1/p₁ + 1/p₂"), "{err}");

    let out = hhl(&["norm", "--kind", "morrey", "--f", "no-such-function", "--p", "2", "--lambda", "-0.25"]);
    assert_eq!(out.status.code(), Some(2));
    let out = hhl(&["verify", "--theorem", "1.3", "--p", "2", "--lambda", "0.5"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn inconclusive_verdict_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let (code, v) = run_to(dir.path(), "v.json", &["verify", "--theorem", "1.3", "--p", "2", "--lambda", "-0.25", "--f", "power:-3"]);
    assert_eq!(code, 1);
    assert_eq!(v["result"]["verdict"], "inconclusive");
}

fn without_timestamp(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("timestamp");
    v
}

#[test]
fn reports_are_deterministic_and_thread_independent() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["norm", "--kind", "morrey", "--f", "power:-0.5", "--p", "2", "--lambda", "-0.2", "--A", "diagonal:2,1,1", "--samples", "8192"];
    let (_, a) = run_to(dir.path(), "a.json", &args);
    let (_, b) = run_to(dir.path(), "b.json", &args);
    assert_eq!(without_timestamp(a.clone()), without_timestamp(b));

    let path = dir.path().join("c.json");
    let out = Command::new(env!("CARGO_BIN_EXE_hhl"))
        .args(args)
        .args(["--out", path.to_str().unwrap()])
        .env("HHL_THREADS", "3")
        .output()
        .unwrap();
    assert!(out.status.success());
    let c: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(without_timestamp(a.clone()), without_timestamp(c));

    let (_, d) = run_to(dir.path(), "d.json", &[&args[..], &["--threads", "1"]].concat());
    assert_eq!(without_timestamp(a), without_timestamp(d));
}

#[test]
fn bad_thread_count_is_a_config_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_hhl")).args(SHARP).env("HHL_THREADS", "0").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn output_is_replaced_atomically() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    std::fs::write(&path, "stale").unwrap();
    let (code, v) = run_to(dir.path(), "r.json", SHARP);
    assert_eq!(code, 0);
    assert_eq!(v["schema"], 1);
    let names: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names.len(), 1, "temporary files left behind: {names:?}");
}

#[test]
fn csv_table_has_header() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    let out = hhl(&["norm", "--kind", "morrey", "--f", "power:-1", "--p", "2", "--lambda", "-0.25", "--format", "csv", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("r,value,err"));
    assert_eq!(lines.count(), 21);
}

#[test]
fn report_battery_passes() {
    let dir = tempfile::tempdir().unwrap();
    let (code, v) = run_to(dir.path(), "rep.json", &["report", "--samples", "16384"]);
    assert_eq!(code, 0, "{v}");
    assert_eq!(v["result"]["failed"], 0);
}

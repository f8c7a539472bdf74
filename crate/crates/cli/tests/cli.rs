use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn aciq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aciq")).args(args).env_remove("ACIQ_THREADS").output().expect("binary runs")
}

fn example_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/example.json")
}

fn json(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).expect("valid JSON")
}

fn complex_re(v: &Value) -> f64 {
    v[0].as_f64().unwrap()
}

#[test]
fn verify_example_passes_with_expected_values() {
    let o = aciq(&["verify", "--config", example_config().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&o.stdout);
    assert_eq!(r["passed"], true);
    assert!((complex_re(&r["omega1"]) - PI * 3.5 * 3.5).abs() < 1e-8 * PI * 12.25);
    assert!((complex_re(&r["flux"]) - 2.0 * PI).abs() < 1e-6);
    assert!((complex_re(&r["K"]) - 2.0).abs() < 1e-6);
    assert_eq!(r["K_printed_formula_discrepancy"], true);
    let names: Vec<&str> = r["checks"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    for n in ["symmetry", "trace_point", "trace_moment", "gauge_condition", "flux", "K", "identity_descriptor", "identity_multiplication", "pullback", "covariance"] {
        assert!(names.contains(&n), "missing check {n}");
    }
}

#[test]
fn printed_scalar_strength_differs_away_from_nu_one() {
    let o = aciq(&["verify", "--nu", "4", "--sigma", "3.5", "--mu", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&o.stdout);
    assert!((complex_re(&r["K"]) - 8.0).abs() < 1e-6);
    assert_eq!(r["K_printed_formula"], 32.0);
    assert_eq!(r["K_printed_value_differs"], true);
}

#[test]
fn localize_argmax_row_is_the_identity() {
    let o = aciq(&["localize", "--nu", "64", "--sigma", "3.5"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("q1,q2,p1,p2,value"));
    let best = lines
        .map(|l| l.split(',').map(|x| x.parse::<f64>().unwrap()).collect::<Vec<_>>())
        .max_by(|a, b| a[4].total_cmp(&b[4]))
        .unwrap();
    assert_eq!(best, vec![1.0, 0.0, 0.0, 0.0, 1.0]);
}

#[test]
fn spectrum_rel_err_column_is_small() {
    let o = aciq(&["spectrum", "--m", "1", "--mu", "0.5", "--K", "2", "--n", "4000"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("m,mu,K,level,eigenvalue,oracle_value,rel_err"));
    let errs: Vec<f64> = lines.map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(errs.len(), 3);
    assert!(errs.iter().all(|&e| e < 0.005), "{errs:?}");
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = example_config();
    let runs = [
        vec!["verify", "--config", cfg.to_str().unwrap()],
        vec!["localize", "--nu", "16", "--sigma", "3.5"],
        vec!["spectrum", "--n", "800", "--levels", "4"],
        vec!["moments", "--nu", "2", "--sigma", "1.5", "--mu", "1", "--format", "csv"],
    ];
    for (i, args) in runs.iter().enumerate() {
        let mut outputs = Vec::new();
        for (j, threads) in ["1", "3"].iter().enumerate() {
            let path = dir.path().join(format!("run{i}_{j}"));
            let mut a = args.clone();
            a.extend(["--out", path.to_str().unwrap(), "--threads", threads]);
            let o = aciq(&a);
            assert_eq!(o.status.code(), Some(0), "{a:?}: {}", String::from_utf8_lossy(&o.stderr));
            assert!(o.stdout.is_empty());
            outputs.push(fs::read(&path).unwrap());
        }
        assert_eq!(outputs[0], outputs[1], "{args:?}");
    }
}

#[test]
fn unknown_key_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, r#"{"weight": {"family": "example", "nu": 1, "sigma": 3.5, "alpha": {"kind": "exponential", "mu": 1}}, "tolerance": 1e-9}"#).unwrap();
    let o = aciq(&["verify", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(o.stdout.is_empty());
    let d = json(&o.stderr);
    assert_eq!(d["status"], "config_error");
    assert!(d["message"].as_str().unwrap().contains("tolerance"));
}

#[test]
fn failing_check_writes_report_and_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("l.json");
    let o = aciq(&["localize", "--nu", "1", "--sigma", "3.5", "--format", "json", "--out", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let d = json(&o.stderr);
    assert_eq!(d["status"], "check_failed");
    assert_eq!(d["failed"][0]["check"], "argmax");
    assert!(d["failed"][0]["measured"].as_f64().unwrap() > 1.0);
    let r = json(&fs::read(&path).unwrap());
    assert_eq!(r["passed"], false);
    assert!((r["argmax"][0].as_f64().unwrap() - 0.6).abs() < 1e-12);
}

#[test]
fn run_takes_the_command_from_the_config() {
    let o = aciq(&["run", "--config", example_config().to_str().unwrap(), "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("key,value\ncommand,verify\npassed,true\n"));
    let o = aciq(&["gauge", "--config", example_config().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(aciq(&["run"]).status.code(), Some(2));
}

#[test]
fn coherent_config_reports_both_flux_routes() {
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/coherent_ring.json");
    let o = aciq(&["coherent", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&o.stdout);
    let res = &r["result"];
    let ratio = complex_re(&res["flux_ratio"]);
    assert!((ratio - res["omega1"].as_f64().unwrap()).abs() < 1e-6 * ratio);
    assert!((complex_re(&res["flux_generic"]) - 2.0 * PI).abs() < 1e-6);
}

#[test]
fn threads_fall_back_to_the_environment() {
    let o = Command::new(env!("CARGO_BIN_EXE_aciq")).args(["spectrum", "--n", "400"]).env("ACIQ_THREADS", "2").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let o = Command::new(env!("CARGO_BIN_EXE_aciq")).args(["spectrum", "--n", "400"]).env("ACIQ_THREADS", "0").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn readme_config_example_is_accepted() {
    let readme = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../README.md")).unwrap();
    let start = readme.find("```json\n").unwrap() + "```json\n".len();
    let body = &readme[start..start + readme[start..].find("```").unwrap()];
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("full.json");
    let out = dir.path().join("report.json");
    fs::write(&cfg, body).unwrap();
    let o = aciq(&["verify", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&fs::read(&out).unwrap());
    assert_eq!(r["passed"], true);
    assert!(r.get("state_gauge").is_none());
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn statsol(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_statsol"))
        .args(args)
        .env_remove("STATSOL_THREADS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn linear_config() -> Value {
    serde_json::from_str(&fs::read_to_string(configs().join("linear_oracle.json")).unwrap()).unwrap()
}

fn write_config(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn records(path: &Path) -> Vec<Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn bundled_configs_validate() {
    for name in ["linear_oracle", "reaction_diffusion", "nse", "wave", "monte_carlo"] {
        let p = configs().join(format!("{name}.json"));
        let o = statsol(&["validate", p.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{name}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn linear_oracle_run_passes() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.ndjson");
    let curves = dir.path().join("c.csv");
    let cfg = configs().join("linear_oracle.json");
    let o = statsol(&[
        "run",
        cfg.to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
        "--curves",
        curves.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let recs = records(&report);
    let liouville: Vec<&Value> = recs.iter().filter(|r| r["check"] == "liouville").collect();
    assert!(!liouville.is_empty());
    for r in liouville {
        assert!(r["order_estimate"].as_f64().unwrap() >= 1.8);
    }
    for r in &recs {
        for key in ["check", "model", "params", "value", "tolerance", "order_estimate", "pass", "seed"] {
            assert!(r.get(key).is_some(), "missing {key} in {r}");
        }
    }
    let csv = fs::read_to_string(curves).unwrap();
    assert!(csv.starts_with("t,"));
    assert_eq!(csv.lines().count(), 102);
}

#[test]
fn negative_dt_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = linear_config();
    v["grid"]["dt"] = (-0.01).into();
    let p = write_config(dir.path(), "bad.json", &v);
    for cmd in ["run", "validate"] {
        let o = statsol(&[cmd, p.to_str().unwrap()]);
        assert_eq!(code(&o), 2);
        assert!(String::from_utf8_lossy(&o.stderr).contains("grid"));
    }
}

#[test]
fn unknown_field_reports_location() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    fs::write(
        &p,
        "{\n  \"model\": {\"name\": \"linear\", \"rate\": 1.0},\n  \"grid\": {\"t0\": 0, \"dt\": 0.1, \"steps\": 2, \"stpes\": 3}\n}\n",
    )
    .unwrap();
    let o = statsol(&["validate", p.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("stpes") && err.contains("line 3"), "{err}");

    let o = statsol(&["validate", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn reports_are_byte_identical_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("nse.json");
    let a = dir.path().join("a.ndjson");
    let b = dir.path().join("b.ndjson");
    let c = dir.path().join("c.ndjson");
    assert_eq!(code(&statsol(&["run", cfg.to_str().unwrap(), "--report", a.to_str().unwrap(), "--threads", "1"])), 0);
    assert_eq!(code(&statsol(&["run", cfg.to_str().unwrap(), "--report", b.to_str().unwrap(), "--threads", "4"])), 0);
    let o = Command::new(env!("CARGO_BIN_EXE_statsol"))
        .args(["run", cfg.to_str().unwrap(), "--report", c.to_str().unwrap()])
        .env("STATSOL_THREADS", "3")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let first = fs::read(&a).unwrap();
    assert_eq!(first, fs::read(&b).unwrap());
    assert_eq!(first, fs::read(&c).unwrap());
}

#[test]
fn failing_check_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = linear_config();
    v["checks"] = serde_json::json!([{ "check": "linear_oracle", "tolerance": 1e-20 }]);
    v["output"] = serde_json::json!({});
    let p = write_config(dir.path(), "strict.json", &v);
    let o = statsol(&["run", p.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let line: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(line["pass"], false);
}

#[test]
fn numerical_failure_exits_three_with_report() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = linear_config();
    v["model"]["rate"] = (-40.0).into();
    v["grid"]["dt"] = 0.1.into();
    v["output"] = serde_json::json!({ "report": "out/r.ndjson" });
    let p = write_config(dir.path(), "blowup.json", &v);
    let o = statsol(&["run", p.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    let recs = records(&dir.path().join("out/r.ndjson"));
    assert!(!recs.is_empty());
    assert!(recs[0]["error"].as_str().unwrap().contains("atom"));
    assert_eq!(recs[0]["value"], Value::Null);
}

#[test]
fn study_fits_orders() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = linear_config();
    v["grid"] = serde_json::json!({ "t0": 0.0, "dt": 0.1, "steps": 10 });
    v["checks"] = serde_json::json!([{ "check": "linear_oracle" }, { "check": "liouville" }]);
    v["output"] = serde_json::json!({});
    let p = write_config(dir.path(), "study.json", &v);
    let o = statsol(&["study", p.to_str().unwrap(), "--halvings", "3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let recs: Vec<Value> = String::from_utf8(o.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let oracle = recs.iter().find(|r| r["check"] == "linear_oracle").unwrap();
    assert_eq!(oracle["values"].as_array().unwrap().len(), 4);
    let p4 = oracle["order_estimate"].as_f64().unwrap();
    assert!((p4 - 4.0).abs() < 0.2, "rk4 order {p4}");
    for r in recs.iter().filter(|r| r["check"] == "liouville") {
        assert!((r["order_estimate"].as_f64().unwrap() - 2.0).abs() < 0.1);
    }

    let o = statsol(&["study", p.to_str().unwrap(), "--halvings", "1"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn frozen_study_reports_null_order() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = linear_config();
    v["model"]["rate"] = 0.0.into();
    v["checks"] = serde_json::json!([{ "check": "liouville" }, { "check": "initial_limit" }]);
    v["output"] = serde_json::json!({});
    let p = write_config(dir.path(), "frozen.json", &v);
    let o = statsol(&["study", p.to_str().unwrap(), "--halvings", "2"]);
    assert_eq!(code(&o), 0);
    for line in String::from_utf8(o.stdout).unwrap().lines() {
        let r: Value = serde_json::from_str(line).unwrap();
        assert_eq!(r["order_estimate"], Value::Null);
        assert!(r["values"].as_array().unwrap().iter().all(|x| x.as_f64() == Some(0.0)));
    }
}

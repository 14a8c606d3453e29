use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dpnormopt_harness::report::{read_records, RECORD_HEADER};
use serde_json::{json, Value};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_dpnormopt"));
    c.env_remove("DPNORMOPT_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn dpnormopt")
}

fn write_json(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn small_config() -> Value {
    json!({
        "geometry": {"norm": "lp", "p": 1.5},
        "domain": {"kind": "ball", "radius": 1.0},
        "loss": "abs-linear",
        "data": {"kind": "planted", "labels": "linear"},
        "epsilons": [1.0],
        "delta": 1e-6,
        "ns": [50, 100],
        "ds": [2, 3],
        "repetitions": 2,
        "seed": 5
    })
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn params_matches_hand_values() {
    let delta = (1.0 / (2.0 * std::f64::consts::E)).to_string();
    let o = run(&[
        "params",
        "--g",
        "1",
        "--theta",
        "0.5",
        "--d",
        "4",
        "--n",
        "100",
        "--epsilon",
        "1",
        "--delta",
        &delta,
        "--c",
        "1",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["erm"]["k"].as_f64().unwrap() - 200.0).abs() < 1e-9);
    assert!((v["erm"]["mu"].as_f64().unwrap() - 0.04).abs() < 1e-13);
    assert!((v["sco"]["k"].as_f64().unwrap() - 734.8469228349534).abs() < 1e-9);
    assert!(v.get("sc-erm").is_none());
}

#[test]
fn params_from_config_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_json(
        dir.path(),
        "p.json",
        &json!({"g": 1.0, "d": 4, "n": 100, "epsilon": 1.0, "delta": 0.1, "mu_loss": 1.0}),
    );
    let out = dir.path().join("params.json");
    let o = run(&[
        "params",
        "--config",
        s(&cfg),
        "--n",
        "200",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["input"]["n"], 200);
    assert!(v["sc-erm"]["k"].as_f64().unwrap() > 0.0);
    assert!(v.get("erm").is_none());
}

#[test]
fn config_errors_exit_2() {
    assert_eq!(run(&["params", "--g", "1"]).status.code(), Some(2));
    let bad_c = [
        "params",
        "--g",
        "1",
        "--theta",
        "1",
        "--d",
        "2",
        "--n",
        "10",
        "--epsilon",
        "1",
        "--delta",
        "0.1",
        "--c",
        "3",
    ];
    assert_eq!(run(&bad_c).status.code(), Some(2));
    assert_eq!(
        run(&["run", "--config", "/nonexistent/config.json"])
            .status
            .code(),
        Some(2)
    );
    let dir = tempfile::tempdir().unwrap();
    let mut v = small_config();
    v["unknown_field"] = json!(1);
    let p = write_json(dir.path(), "bad.json", &v);
    assert_eq!(run(&["run", "--config", s(&p)]).status.code(), Some(2));
    let mut v = small_config();
    v["delta"] = json!(0.7);
    let p = write_json(dir.path(), "bad_delta.json", &v);
    let o = run(&["run", "--config", s(&p)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("delta"));
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_json(dir.path(), "c.json", &small_config());
    let out = |name: &str, extra: &[&str]| {
        let p = dir.path().join(name);
        let mut args = vec!["run", "--config", s(&cfg), "--out", s(&p)];
        args.extend_from_slice(extra);
        let o = run(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        p
    };
    let a = out("a.csv", &["--threads", "1"]);
    let b = out("b.csv", &["--threads", "2"]);
    let c = out("c.csv", &["--seed", "6"]);
    let bytes = |p: &Path| std::fs::read(p).unwrap();
    assert_eq!(bytes(&a), bytes(&b));
    assert_eq!(
        bytes(&dir.path().join("a_summary.csv")),
        bytes(&dir.path().join("b_summary.csv"))
    );
    assert_ne!(bytes(&a), bytes(&c));

    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().next().unwrap(), RECORD_HEADER.join(","));
    let rows = read_records(&a).unwrap();
    assert_eq!(rows.len(), 2 * 2 * 2);
    let keys: Vec<_> = rows.iter().map(|r| (r.d, r.n, r.rep)).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    assert!(rows
        .iter()
        .all(|r| r.variant == "erm" && r.runtime_ms == 0.0 && r.value_queries > 0));
}

#[test]
fn constant_losses_give_zero_gap() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = small_config();
    v["data"] = json!({"kind": "constant"});
    let cfg = write_json(dir.path(), "c.json", &v);
    let out = dir.path().join("runs.csv");
    let o = run(&["run", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_records(&out).unwrap();
    assert_eq!(rows.len(), 8);
    assert!(rows
        .iter()
        .all(|r| r.empirical_gap == 0.0 && r.analytic_bound == 0.0));
}

#[test]
fn bound_column_scales_as_inverse_epsilon() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = small_config();
    v["epsilons"] = json!([0.25, 0.5, 1.0, 2.0, 4.0]);
    v["ns"] = json!([80]);
    v["ds"] = json!([3]);
    v["repetitions"] = json!(1);
    let cfg = write_json(dir.path(), "c.json", &v);
    let out = dir.path().join("runs.csv");
    assert!(run(&["run", "--config", s(&cfg), "--out", s(&out)])
        .status
        .success());
    let rows = read_records(&out).unwrap();
    assert_eq!(rows.len(), 5);
    let base = rows[0].analytic_bound * rows[0].epsilon;
    for r in &rows {
        assert!(
            (r.analytic_bound * r.epsilon / base - 1.0).abs() < 1e-10,
            "{r:?}"
        );
    }
}

#[test]
fn real_data_sco_is_labeled_empirical() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    let mut text = String::from("a_1,a_2,b\n");
    for i in 0..40 {
        let t = i as f64 / 40.0;
        text.push_str(&format!("{},{},{}\n", 0.5 * t, 0.3 - 0.4 * t, 0.1 * t));
    }
    std::fs::write(&data, text).unwrap();
    let mut v = small_config();
    v["data"] = json!({"kind": "csv", "path": data});
    v["variant"] = json!("sco");
    v["ns"] = json!([20]);
    v["ds"] = json!([2]);
    let cfg = write_json(dir.path(), "c.json", &v);
    let out = dir.path().join("runs.csv");
    let o = run(&["run", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_records(&out).unwrap();
    assert!(!rows.is_empty() && rows.iter().all(|r| r.variant == "sco-empirical"));
}

#[test]
fn sample_prints_a_point_in_the_domain() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_json(dir.path(), "c.json", &small_config());
    let o = run(&["sample", "--config", s(&cfg)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let x: Vec<f64> = serde_json::from_value(v["x"].clone()).unwrap();
    assert_eq!(x.len(), 2);
    let norm = x
        .iter()
        .map(|t| t.abs().powf(1.5))
        .sum::<f64>()
        .powf(1.0 / 1.5);
    assert!(norm <= 1.0 + 1e-9, "{x:?}");
    assert_eq!(o.stdout, run(&["sample", "--config", s(&cfg)]).stdout);
}

#[test]
fn audit_zero_counts_warn_and_pass() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_json(
        dir.path(),
        "a.json",
        &json!({"gdp_instances": 0, "shift_cases": 0, "gibbs_targets": 0, "kmu_tuples": 0,
                "concentration_samples": 0, "mechanism_cases": 0}),
    );
    let out = dir.path().join("audit.csv");
    let o = run(&["audit", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    let err = String::from_utf8_lossy(&o.stderr);
    assert_eq!(err.matches("vacuous").count(), 6, "{err}");
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 6);
    assert_eq!(
        std::fs::read_to_string(&out).unwrap().trim(),
        "instance_id,epsilon,lhs_delta,rhs_delta,margin,pass"
    );
}

#[test]
fn audit_injected_bug_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_json(
        dir.path(),
        "a.json",
        &json!({"gdp_instances": 2, "shift_cases": 5, "gibbs_targets": 1, "kmu_tuples": 5,
                "concentration_samples": 500, "mechanism_cases": 1}),
    );
    let ok = run(&["audit", "--config", s(&cfg)]);
    assert_eq!(
        ok.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&ok.stdout)
    );
    let bad = run(&["audit", "--config", s(&cfg), "--inject-bug"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stdout)
        .lines()
        .all(|l| !l.starts_with("PASS")));
}

#[test]
fn threads_fall_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_json(dir.path(), "c.json", &small_config());
    let out = dir.path().join("runs.csv");
    let o = bin()
        .env("DPNORMOPT_THREADS", "2")
        .args(["run", "--config", s(&cfg), "--out", s(&out)])
        .output()
        .unwrap();
    assert!(o.status.success());
    let o = bin()
        .env("DPNORMOPT_THREADS", "many")
        .args(["run", "--config", s(&cfg)])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

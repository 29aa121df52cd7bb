use membrane_core::mc_oracle::heat_gaussian;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn membrane(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_membrane"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn rows(csv: &str) -> Vec<(f64, f64, f64, String)> {
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("s,x,u,side"));
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[1].parse().unwrap(), f[2].parse().unwrap(), f[3].to_string())
        })
        .collect()
}

fn validate_report(text: &str) -> serde_json::Value {
    let schema: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(repo().join("schema/report.v1.json")).unwrap()).unwrap();
    let compiled = jsonschema::JSONSchema::compile(&schema).unwrap();
    let doc: serde_json::Value = serde_json::from_str(text).unwrap();
    if let Err(errors) = compiled.validate(&doc) {
        let msgs: Vec<String> = errors.map(|e| e.to_string()).collect();
        panic!("report does not match schema: {msgs:?}");
    }
    doc
}

#[test]
fn constant_one_is_conserved() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "one.json",
        r#"{"problem": "moving-skew", "s": [0.0, 0.5], "grid": {"x_min": -2, "x_max": 2, "points": 9}}"#,
    );
    let out = membrane(&["solve", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = rows(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(r.len(), 18);
    for (s, x, u, _) in &r {
        assert!((u - 1.0).abs() <= 1e-3, "u({s}, {x}) = {u}");
    }
}

#[test]
fn symmetric_solve_matches_heat_kernel() {
    let cfg = repo().join("configs/solve_symmetric.json");
    let out = membrane(&["solve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    for (s, x, u, side) in rows(&String::from_utf8(out.stdout).unwrap()) {
        let exact = heat_gaussian(1.0, 0.3, 1.0, 1.0, 1.0 - s, x);
        assert!((u - exact).abs() <= 1e-3, "s={s} x={x}: {u} vs {exact}");
        let expect = if x < 0.0 { "left" } else if x > 0.0 { "right" } else { "membrane" };
        assert_eq!(side, expect);
    }
}

#[test]
fn significant_digits_are_applied() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "p.json",
        r#"{"problem": "symmetric", "phi": {"kind": "gaussian-bump", "params": [1, 0, 1]},
            "grid": {"x_min": 0.5, "x_max": 0.5, "points": 1}, "precision": 4}"#,
    );
    let out = membrane(&["solve", "--config", &cfg]);
    let text = String::from_utf8(out.stdout).unwrap();
    let u = text.lines().nth(1).unwrap().split(',').nth(2).unwrap().to_string();
    let digits = u.trim_start_matches("0.").trim_start_matches('0');
    assert!(digits.len() <= 4, "{u}");
}

#[test]
fn malformed_problem_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let problem = std::fs::read_to_string(repo().join("configs/problems/symmetric.json"))
        .unwrap()
        .replacen("\"params\": [1.0]", "\"parms\": [1.0]", 1);
    write_config(dir.path(), "bad.json", &problem);
    let cfg = write_config(dir.path(), "run.json", r#"{"problem": "bad.json"}"#);
    let out = membrane(&["solve", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("left.diffusion"), "{err}");
    assert!(err.contains("parms"), "{err}");
}

#[test]
fn nonparabolic_problem_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "run.json",
        r#"{"problem": {
            "left": {"drift": {"kind": "constant", "params": [0]}, "diffusion": {"kind": "constant", "params": [-1]}},
            "right": {"drift": {"kind": "constant", "params": [0]}, "diffusion": {"kind": "constant", "params": [1]}},
            "membrane": {"kind": "constant", "params": [0]},
            "wentzell": {"q1": {"kind": "constant", "params": [0.5]}, "q2": {"kind": "constant", "params": [0.5]}},
            "horizon": 1}}"#,
    );
    let out = membrane(&["solve", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn missing_files_are_io_errors() {
    let out = membrane(&["solve", "--config", "/nonexistent/run.json"]);
    assert_eq!(out.status.code(), Some(4));
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.json", r#"{"problem": "symmetric"}"#);
    let out = membrane(&["solve", "--config", &cfg, "--out", "/nonexistent/dir/u.csv"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn divergence_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "run.json",
        r#"{"problem": "atomic", "phi": {"kind": "gaussian-bump", "params": [1, 0.3, 0.6]},
            "grid": {"x_min": 0, "x_max": 1, "points": 2}, "solver": {"k_max": 2}}"#,
    );
    let out = membrane(&["solve", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("diverged"));
}

#[test]
fn semigroup_suite_on_symmetric_case_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "run.json",
        r#"{"problem": "symmetric", "phi": {"kind": "gaussian-bump", "params": [1, 0.3, 1]}}"#,
    );
    let report_path = dir.path().join("report.json");
    let out = membrane(&["check", "--suite", "semigroup", "--config", &cfg, "--out", report_path.to_str().unwrap()]);
    let text = std::fs::read_to_string(&report_path).unwrap();
    assert_eq!(out.status.code(), Some(0), "{text}");
    let doc = validate_report(&text);
    assert_eq!(doc["pass"], true);
    assert_eq!(doc["command"], "check semigroup");
}

#[test]
fn parametrix_suite_on_constant_coefficients_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.json", r#"{"problem": "two-diffusions", "suite": "parametrix"}"#);
    let out = membrane(&["check", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(0));
    let doc = validate_report(&String::from_utf8(out.stdout).unwrap());
    for r in doc["results"].as_array().unwrap() {
        assert!(r["statistic"].as_f64().unwrap() <= 1e-3, "{r}");
    }
}

#[test]
fn conjugation_suite_on_skew_case_passes() {
    let cfg = repo().join("configs/check_skew.json");
    let out = membrane(&["check", "--suite", "conjugation", "--config", cfg.to_str().unwrap()]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(out.status.code(), Some(0), "{text}");
    validate_report(&text);
}

#[test]
fn unknown_suite_is_invalid_input() {
    let cfg = repo().join("configs/check_skew.json");
    let out = membrane(&["check", "--suite", "nonsense", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn validate_emits_a_schema_report() {
    let cfg = repo().join("configs/check_atomic.json");
    let out = membrane(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    validate_report(&String::from_utf8(out.stdout).unwrap());
}

#[test]
fn compare_mc_symmetric_case_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "run.json",
        r#"{"problem": "symmetric", "phi": {"kind": "gaussian-bump", "params": [1, 0.3, 1]},
            "mc": {"paths": 100000, "seed": 42, "points": [-0.5, 0.5]}}"#,
    );
    let out = membrane(&["compare-mc", "--config", &cfg]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(out.status.code(), Some(0), "{text}");
    validate_report(&text);
}

#[test]
fn compare_mc_reruns_are_byte_identical() {
    let cfg = repo().join("configs/compare_skew.json");
    let cfg = cfg.to_str().unwrap();
    let a = membrane(&["compare-mc", "--config", cfg, "--paths", "20000", "--seed", "7", "--threads", "2"]);
    let b = membrane(&["compare-mc", "--config", cfg, "--paths", "20000", "--seed", "7"]);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stdout));
    assert!(!a.stdout.is_empty());
    assert_eq!(a.stdout, b.stdout);
    validate_report(&String::from_utf8(a.stdout).unwrap());
}

#[test]
fn coarse_simulation_step_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "run.json",
        r#"{"problem": "skew", "mc": {"paths": 20000, "dt": 0.1, "points": [0.0]}}"#,
    );
    let out = membrane(&["compare-mc", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn kernel_dump_is_written() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "run.json",
        r#"{"problem": "single-atom", "phi": {"kind": "gaussian-bump", "params": [1, 0.3, 0.6]},
            "grid": {"x_min": 0, "x_max": 1, "points": 2}, "solver": {"nodes": 16}}"#,
    );
    let dump = dir.path().join("kernels.json");
    let out = membrane(&["solve", "--config", &cfg, "--dump-kernels", dump.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dump).unwrap()).unwrap();
    assert_eq!(doc["kernels"]["rows"].as_array().unwrap().len(), 16);
    assert_eq!(doc["solution"]["densities"]["w1"].as_array().unwrap().len(), 17);
}

use membrane_core::cases;
use membrane_core::problem::Problem;
use std::path::Path;

fn compiled(name: &str) -> jsonschema::JSONSchema {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schema").join(name);
    let schema: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    jsonschema::JSONSchema::compile(&schema).unwrap()
}

fn assert_valid(schema: &jsonschema::JSONSchema, doc: &serde_json::Value, what: &str) {
    if let Err(errors) = schema.validate(doc) {
        let msgs: Vec<String> = errors.map(|e| format!("{} at {}", e, e.instance_path)).collect();
        panic!("{what}: {msgs:?}");
    }
}

#[test]
fn builtin_cases_match_the_problem_schema() {
    let schema = compiled("problem.v1.json");
    for name in [
        "symmetric",
        "skew",
        "moving-skew",
        "moving-symmetric",
        "atomic",
        "single-atom",
        "two-diffusions",
        "variable-b",
    ] {
        let p = cases::by_name(name).unwrap();
        let doc: serde_json::Value = serde_json::from_str(&p.to_json_string()).unwrap();
        assert_valid(&schema, &doc, name);
        let back = Problem::from_json_str(&p.to_json_string()).unwrap();
        assert_eq!(back, p, "{name}");
    }
}

#[test]
fn shipped_problem_files_match_the_schema() {
    let schema = compiled("problem.v1.json");
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/problems");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_valid(&schema, &doc, &path.display().to_string());
        Problem::from_json_str(&text).unwrap();
        seen += 1;
    }
    assert!(seen >= 4);
}

#[test]
fn schema_rejects_unknown_keys() {
    let schema = compiled("problem.v1.json");
    let mut doc: serde_json::Value = serde_json::from_str(&cases::skew().to_json_string()).unwrap();
    doc["left"]["viscosity"] = serde_json::json!(1.0);
    assert!(!schema.is_valid(&doc));
}

#[test]
fn report_schema_accepts_reports() {
    use membrane_core::report::{CheckResult, Report};
    let schema = compiled("report.v1.json");
    let r = Report::new(
        "check",
        vec![
            CheckResult::at_most("conservation", "skew", 1e-5, 1e-3).with_detail("s=0 t=1"),
            CheckResult::at_most("closed-form", "skew", f64::NAN, 1e-3),
        ],
    );
    let doc: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
    assert_valid(&schema, &doc, "report");
}

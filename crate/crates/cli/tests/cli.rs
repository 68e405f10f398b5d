//! End-to-end tests of the command-line interface: subcommands, output
//! files, exit codes, schema conformance and thread-count determinism.

use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fragcp"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn scenario_config(out: &Path) -> String {
    format!(
        r#"{{
            "data": {{"scenario": {{"id": "i", "n": 60, "m": 30}}}},
            "method": "ffdp",
            "r": 3,
            "lambda": 0.01,
            "xi_or_tau": 800.0,
            "inference": {{"alphas": [0.05], "b": 200}},
            "reps": 2,
            "seed": 12,
            "out": "{}"
        }}"#,
        out.display()
    )
}

/// Minimal JSON-schema checker covering the subset used by the shipped
/// schemas: type, required, properties, items, enum, minItems, maxItems.
fn validate(value: &Value, schema: &Value, path: &str) -> Result<(), String> {
    if let Some(types) = schema.get("type") {
        let allowed: Vec<String> = match types {
            Value::String(s) => vec![s.clone()],
            Value::Array(a) => a
                .iter()
                .map(|v| v.as_str().unwrap().to_string())
                .collect(),
            _ => vec![],
        };
        let actual = match value {
            Value::Null => "null",
            Value::Bool(_) => "boolean",
            Value::Number(n) => {
                if n.is_i64() || n.is_u64() {
                    "integer"
                } else {
                    "number"
                }
            }
            Value::String(_) => "string",
            Value::Array(_) => "array",
            Value::Object(_) => "object",
        };
        let ok = allowed.iter().any(|t| {
            t == actual || (t == "number" && actual == "integer")
        });
        if !ok {
            return Err(format!("{path}: type {actual} not in {allowed:?}"));
        }
    }
    if let Some(options) = schema.get("enum").and_then(|e| e.as_array()) {
        if !options.contains(value) {
            return Err(format!("{path}: {value} not in enum"));
        }
    }
    if let (Value::Object(map), Some(required)) =
        (value, schema.get("required").and_then(|r| r.as_array()))
    {
        for key in required {
            let key = key.as_str().unwrap();
            if !map.contains_key(key) {
                return Err(format!("{path}: missing required field '{key}'"));
            }
        }
    }
    if let (Value::Object(map), Some(props)) =
        (value, schema.get("properties").and_then(|p| p.as_object()))
    {
        for (key, sub) in props {
            if let Some(v) = map.get(key) {
                validate(v, sub, &format!("{path}.{key}"))?;
            }
        }
    }
    if let (Value::Array(items), Some(sub)) = (value, schema.get("items")) {
        if let Some(min) = schema.get("minItems").and_then(|v| v.as_u64()) {
            if (items.len() as u64) < min {
                return Err(format!("{path}: fewer than {min} items"));
            }
        }
        if let Some(max) = schema.get("maxItems").and_then(|v| v.as_u64()) {
            if (items.len() as u64) > max {
                return Err(format!("{path}: more than {max} items"));
            }
        }
        for (i, item) in items.iter().enumerate() {
            validate(item, sub, &format!("{path}[{i}]"))?;
        }
    }
    Ok(())
}

fn check_schema(json_path: &Path, schema_name: &str) {
    let value: Value =
        serde_json::from_str(&std::fs::read_to_string(json_path).unwrap()).unwrap();
    let schema_path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../schemas")
        .join(schema_name);
    let schema: Value =
        serde_json::from_str(&std::fs::read_to_string(schema_path).unwrap()).unwrap();
    if let Err(e) = validate(&value, &schema, "$") {
        panic!("{} violates {schema_name}: {e}", json_path.display());
    }
}

#[test]
fn simulate_writes_dataset_and_truth() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let body = format!(
        r#"{{
            "data": {{"scenario": {{"id": "i", "n": 200}}}},
            "lambda": 0.1, "xi_or_tau": 1600.0,
            "seed": 7,
            "out": "{}"
        }}"#,
        out.display()
    );
    let cfg = write_config(dir.path(), "cfg.json", &body);
    let status = bin().args(["simulate", "--config"]).arg(&cfg).status().unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(out.join("data.csv")).unwrap();
    assert_eq!(csv.lines().count(), 200 * 30 + 1);
    let truth: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("truth.json")).unwrap()).unwrap();
    assert_eq!(truth["change_points"], serde_json::json!([100]));
    check_schema(&out.join("truth.json"), "truth.schema.json");

    // Same seed, second run: identical bytes.
    let out2 = dir.path().join("run2");
    let body2 = body.replace(&format!("{}", out.display()), &format!("{}", out2.display()));
    let cfg2 = write_config(dir.path(), "cfg2.json", &body2);
    assert!(bin().args(["simulate", "--config"]).arg(&cfg2).status().unwrap().success());
    assert_eq!(
        std::fs::read(out.join("data.csv")).unwrap(),
        std::fs::read(out2.join("data.csv")).unwrap()
    );
}

#[test]
fn detect_emits_valid_result_and_honors_no_infer() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = write_config(dir.path(), "cfg.json", &scenario_config(&out));
    assert!(bin().args(["detect", "--config"]).arg(&cfg).status().unwrap().success());
    let result: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("result.json")).unwrap()).unwrap();
    assert_eq!(result["k_hat"], serde_json::json!(1));
    assert_eq!(result["method"], serde_json::json!("ffdp"));
    assert!(!result["change_point_reports"][0]["inference"]
        .as_array()
        .unwrap()
        .is_empty());
    check_schema(&out.join("result.json"), "result.schema.json");

    let out_ni = dir.path().join("no_infer");
    let cfg_ni = write_config(dir.path(), "cfg_ni.json", &scenario_config(&out_ni));
    assert!(bin()
        .args(["detect", "--no-infer", "--config"])
        .arg(&cfg_ni)
        .status()
        .unwrap()
        .success());
    let result: Value =
        serde_json::from_str(&std::fs::read_to_string(out_ni.join("result.json")).unwrap())
            .unwrap();
    assert!(result["change_point_reports"][0]["inference"]
        .as_array()
        .unwrap()
        .is_empty());
}

#[test]
fn detect_runs_on_simulated_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = write_config(dir.path(), "cfg.json", &scenario_config(&out));
    assert!(bin().args(["simulate", "--config"]).arg(&cfg).status().unwrap().success());
    let csv_cfg = format!(
        r#"{{
            "data": {{"csv": "{}"}},
            "method": "sbs",
            "r": 3,
            "lambda": 0.01,
            "xi_or_tau": 50.0,
            "no_infer": true,
            "seed": 3,
            "out": "{}"
        }}"#,
        out.join("data.csv").display(),
        out.display()
    );
    let cfg2 = write_config(dir.path(), "csv_cfg.json", &csv_cfg);
    assert!(bin().args(["detect", "--config"]).arg(&cfg2).status().unwrap().success());
    let result: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("result.json")).unwrap()).unwrap();
    assert_eq!(result["method"], serde_json::json!("sbs"));
    check_schema(&out.join("result.json"), "result.schema.json");
}

#[test]
fn evaluate_smoke_and_thread_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let out1 = dir.path().join("t1");
    let out2 = dir.path().join("t8");
    let cfg = write_config(dir.path(), "cfg.json", &scenario_config(&out1));
    assert!(bin()
        .args(["evaluate", "--threads", "1", "--config"])
        .arg(&cfg)
        .status()
        .unwrap()
        .success());
    check_schema(&out1.join("summary.json"), "summary.schema.json");
    assert!(bin()
        .args(["evaluate", "--threads", "8", "--out"])
        .arg(&out2)
        .args(["--config"])
        .arg(&cfg)
        .status()
        .unwrap()
        .success());
    assert_eq!(
        std::fs::read(out1.join("summary.json")).unwrap(),
        std::fs::read(out2.join("summary.json")).unwrap(),
        "summary.json differs between --threads 1 and --threads 8"
    );
}

#[test]
fn cv_selects_single_candidate() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg_body = format!(
        r#"{{
            "data": {{"scenario": {{"id": "i", "n": 60, "m": 30}}}},
            "grid": {{"lambdas": [0.01], "rs": [3], "xis_or_taus": [800.0]}},
            "seed": 12,
            "out": "{}"
        }}"#,
        out.display()
    );
    let cfg = write_config(dir.path(), "cfg.json", &cfg_body);
    assert!(bin().args(["cv", "--config"]).arg(&cfg).status().unwrap().success());
    let cv: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("cv.json")).unwrap()).unwrap();
    assert_eq!(cv["lambda"], serde_json::json!(0.01));
    assert_eq!(cv["r"], serde_json::json!(3));
    assert_eq!(cv["xi_or_tau"], serde_json::json!(800.0));
}

#[test]
fn config_errors_exit_two_data_errors_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    // Malformed config: neither grid nor fixed parameters.
    let bad = write_config(
        dir.path(),
        "bad.json",
        r#"{"data": {"scenario": {"id": "i", "n": 60}}}"#,
    );
    let status = bin().args(["detect", "--config"]).arg(&bad).status().unwrap();
    assert_eq!(status.code(), Some(2));

    // Missing CSV file: a data error.
    let missing = write_config(
        dir.path(),
        "missing.json",
        r#"{"data": {"csv": "/nonexistent/data.csv"},
            "lambda": 0.1, "xi_or_tau": 10.0}"#,
    );
    let status = bin().args(["detect", "--config"]).arg(&missing).status().unwrap();
    assert_eq!(status.code(), Some(3));

    // Unknown scenario id.
    let unk = write_config(
        dir.path(),
        "unk.json",
        r#"{"data": {"scenario": {"id": "vii", "n": 60}},
            "lambda": 0.1, "xi_or_tau": 10.0}"#,
    );
    let status = bin().args(["simulate", "--config"]).arg(&unk).status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn set_overrides_nested_config_fields() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = write_config(dir.path(), "cfg.json", &scenario_config(&out));
    assert!(bin()
        .args(["detect", "--set", "xi_or_tau=400.0", "--set", "inference.b=100", "--config"])
        .arg(&cfg)
        .status()
        .unwrap()
        .success());
    let result: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("result.json")).unwrap()).unwrap();
    assert_eq!(result["xi_or_tau"], serde_json::json!(400.0));
}

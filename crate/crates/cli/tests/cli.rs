use qcoin_core::solver::EXACT_NORMALIZED_MAX;
use regex::Regex;
use serde_json::Value;
use std::path::PathBuf;
use std::process::Command;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn qcoin(args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_qcoin"))
        .args(args)
        .output()
        .expect("binary runs");
    Run {
        code: out.status.code().expect("exit code"),
        stdout: String::from_utf8(out.stdout).expect("utf-8 stdout"),
        stderr: String::from_utf8(out.stderr).expect("utf-8 stderr"),
    }
}

fn ok(args: &[&str]) -> String {
    let r = qcoin(args);
    assert_eq!(r.code, 0, "qcoin {}: {}", args.join(" "), r.stderr);
    r.stdout
}

fn schema(name: &str) -> Value {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../schemas").join(name);
    serde_json::from_str(&std::fs::read_to_string(path).expect("schema file")).expect("schema json")
}

fn type_matches(ty: &str, v: &Value) -> bool {
    match ty {
        "object" => v.is_object(),
        "array" => v.is_array(),
        "string" => v.is_string(),
        "boolean" => v.is_boolean(),
        "null" => v.is_null(),
        "integer" => v.is_u64() || v.is_i64(),
        "number" => v.is_number(),
        other => panic!("unsupported schema type {other}"),
    }
}

/// Checks the schema keywords our schema files use.
fn validate(s: &Value, v: &Value, path: &str) -> Vec<String> {
    let mut errs = Vec::new();
    if let Some(t) = s.get("type") {
        let types: Vec<&str> = match t {
            Value::String(one) => vec![one.as_str()],
            Value::Array(many) => many.iter().map(|x| x.as_str().expect("type name")).collect(),
            _ => panic!("bad type keyword"),
        };
        if !types.iter().any(|ty| type_matches(ty, v)) {
            errs.push(format!("{path}: expected {types:?}, got {v}"));
            return errs;
        }
    }
    if let Some(options) = s.get("enum").and_then(Value::as_array) {
        if !options.contains(v) {
            errs.push(format!("{path}: {v} not in {options:?}"));
        }
    }
    if let (Some(min), Some(x)) = (s.get("minimum").and_then(Value::as_f64), v.as_f64()) {
        if x < min {
            errs.push(format!("{path}: {x} below {min}"));
        }
    }
    if let (Some(p), Some(text)) = (s.get("pattern").and_then(Value::as_str), v.as_str()) {
        if !Regex::new(p).expect("pattern compiles").is_match(text) {
            errs.push(format!("{path}: {text:?} does not match {p}"));
        }
    }
    if let Some(obj) = v.as_object() {
        for key in s.get("required").and_then(Value::as_array).into_iter().flatten() {
            let key = key.as_str().expect("required key");
            if !obj.contains_key(key) {
                errs.push(format!("{path}: missing {key}"));
            }
        }
        let props = s.get("properties").and_then(Value::as_object);
        for (key, val) in obj {
            match props.and_then(|p| p.get(key)) {
                Some(sub) => errs.extend(validate(sub, val, &format!("{path}.{key}"))),
                None if s.get("additionalProperties") == Some(&Value::Bool(false)) => {
                    errs.push(format!("{path}: unexpected {key}"))
                }
                None => {}
            }
        }
    }
    if let (Some(items), Some(arr)) = (s.get("items"), v.as_array()) {
        for (i, item) in arr.iter().enumerate() {
            errs.extend(validate(items, item, &format!("{path}[{i}]")));
        }
    }
    errs
}

fn assert_valid(schema_name: &str, v: &Value) {
    let errs = validate(&schema(schema_name), v, "$");
    assert!(errs.is_empty(), "{schema_name}: {errs:#?}");
}

fn json_lines(s: &str) -> Vec<Value> {
    s.lines().map(|l| serde_json::from_str(l).expect("one JSON object per line")).collect()
}

#[test]
fn validator_rejects_bad_reports() {
    let mut good: Value = serde_json::from_str(ok(&["solve", "--n", "6", "--k", "1"]).trim()).unwrap();
    assert_valid("report.schema.json", &good);
    good["x_found"] = Value::from("01x");
    good["mode"] = Value::from("fast");
    good["extra"] = Value::from(1);
    good.as_object_mut().unwrap().remove("seed");
    assert_eq!(validate(&schema("report.schema.json"), &good, "$").len(), 4);
}

#[test]
fn exact_solve_example() {
    let v = json_lines(&ok(&["solve", "--n", "8", "--k", "2", "--x", "01000001", "--exact"]));
    assert_eq!(v.len(), 1);
    let r = &v[0];
    assert_valid("report.schema.json", r);
    assert_eq!(r["solver"], "find-exact");
    assert_eq!(r["success"], true);
    assert_eq!(r["x_found"], "01000001");
    assert!(r["success_probability"].as_f64().unwrap() >= 1.0 - 1e-9);
    let q = r["queries"]["balance"].as_f64().unwrap();
    assert!(q <= EXACT_NORMALIZED_MAX * 2f64.powf(0.25), "{q}");
}

#[test]
fn k_at_least_half_n_is_a_domain_error() {
    let r = qcoin(&["solve", "--n", "8", "--k", "5"]);
    assert_eq!(r.code, 3);
    assert!(r.stdout.is_empty());
    assert!(r.stderr.starts_with("error:"), "{}", r.stderr);
}

#[test]
fn seeded_solve_is_repeatable() {
    let args = ["solve", "--n", "8", "--k", "1", "--seed", "7"];
    assert_eq!(ok(&args), ok(&args));
}

#[test]
fn trials_use_consecutive_seeds() {
    let v = json_lines(&ok(&["solve", "--n", "10", "--k", "2", "--solver", "find-star", "--seed", "3", "--trials", "4"]));
    let seeds: Vec<u64> = v.iter().map(|r| r["seed"].as_u64().unwrap()).collect();
    assert_eq!(seeds, vec![3, 4, 5, 6]);
    for r in &v {
        assert_valid("report.schema.json", r);
    }
}

#[test]
fn every_solver_emits_valid_reports() {
    for solver in ["k1", "find-star", "find-exact", "quasi", "classical-k1", "classical-general"] {
        let k = if solver.ends_with("k1") { "1" } else { "2" };
        let v = json_lines(&ok(&["solve", "--n", "9", "--k", k, "--solver", solver, "--seed", "1"]));
        assert_eq!(v[0]["solver"], solver);
        assert_valid("report.schema.json", &v[0]);
    }
    let v = json_lines(&ok(&["classical", "--n", "9", "--k", "1", "--x", "000010000"]));
    assert_valid("report.schema.json", &v[0]);
    assert_eq!(v[0]["success"], true);
}

#[test]
fn doubling_sweep_is_monotone_and_bounded() {
    let out = ok(&["sweep", "--ks", "1,2,4,8,16,32,64,128,256"]);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("n,k,success_probability,queries,normalized"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 9);
    for (row, k) in rows.iter().zip([1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0]) {
        assert_eq!(row[0], 4.0 * k + 1.0);
        assert_eq!(row[1], k);
        assert!(row[2] >= 1.0 - 1e-9);
        assert!(row[4] <= EXACT_NORMALIZED_MAX);
    }
    assert!(rows.windows(2).all(|w| w[0][3] <= w[1][3]));
}

#[test]
fn single_point_sweep_matches_solve() {
    let cases: [(&str, &str, &str, &str); 3] = [
        ("10", "3", "find-star", "full"),
        ("33", "8", "find-exact", "class"),
        ("64", "4", "quasi", "class"),
    ];
    for (n, k, solver, mode) in cases {
        let sweep = ok(&["sweep", "--ks", k, "--n", n, "--solver", solver, "--mode", mode, "--seed", "4", "--format", "json"]);
        let row = &serde_json::from_str::<Value>(&sweep).unwrap()[0];
        let report = &json_lines(&ok(&["solve", "--n", n, "--k", k, "--solver", solver, "--mode", mode, "--seed", "4"]))[0];
        assert_eq!(row["success_probability"], report["success_probability"], "{solver}");
        let total = report["queries"]["balance"].as_u64().unwrap() + report["queries"]["quasi"].as_u64().unwrap();
        assert_eq!(row["queries"].as_u64().unwrap(), total, "{solver}");
    }
}

#[test]
fn empty_k_list_is_a_usage_error() {
    assert_eq!(qcoin(&["sweep", "--ks", ""]).code, 2);
}

#[test]
fn gamma_row() {
    let out = ok(&["bounds", "gamma", "--n", "8", "--k", "2", "--c", "4"]);
    assert_eq!(out, "n,k,c,gamma,binom,ratio\n8,2,4,10,28,0.357142857143\n");
}

#[test]
fn gamma_needs_a_divisor() {
    let r = qcoin(&["bounds", "gamma", "--n", "8", "--k", "2", "--c", "3"]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("c = 3"), "{}", r.stderr);
}

#[test]
fn quasi_adversary_bound_is_positive() {
    let out = ok(&["bounds", "adversary", "--scheme", "quasi", "--n", "8", "--k", "2", "--l", "4"]);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("scheme,n,k,l_or_d,bound,normalized"));
    let cols: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&cols[..4], &["quasi", "8", "2", "4"]);
    assert!(cols[4].parse::<f64>().unwrap() > 0.0);
}

#[test]
fn calibration_matches_schema() {
    let v: Value = serde_json::from_str(&ok(&["calibrate", "--k-max", "8"])).unwrap();
    assert_valid("calibration.schema.json", &v);
    assert_eq!(v["records"].as_array().unwrap().len(), 8);
}

#[test]
fn check_reports_verdict_and_ledger() {
    let v: Value = serde_json::from_str(&ok(&["check", "--x", "000010000", "--candidate", "000010000", "--strategy", "bigpan"])).unwrap();
    assert_eq!(v["verdict"], true);
    assert_eq!(v["weighings"], v["ledger_balance"]);
    let v: Value = serde_json::from_str(&ok(&["check", "--x", "000010000", "--candidate", "000001000"])).unwrap();
    assert_eq!(v["verdict"], false);
}

#[test]
fn resource_cap_and_bad_config_exit_codes() {
    assert_eq!(qcoin(&["solve", "--n", "20", "--k", "2", "--exact"]).code, 4);
    assert_eq!(qcoin(&["solve", "--n", "8", "--k", "2", "--x", "0100001"]).code, 2);
    assert_eq!(qcoin(&["solve", "--n", "8", "--k", "2", "--solver", "nope"]).code, 2);
    assert_eq!(qcoin(&["bounds", "adversary", "--scheme", "nope", "--n", "8", "--k", "2", "--l", "4"]).code, 2);
}

#[test]
fn out_flag_writes_the_same_bytes() {
    let dir = std::env::temp_dir().join(format!("qcoin-cli-test-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("gamma.csv");
    let args = ["bounds", "gamma", "--n", "12", "--k", "3", "--c", "3"];
    let direct = ok(&args);
    let mut with_out = vec!["--out", path.to_str().unwrap()];
    with_out.extend(args);
    assert_eq!(ok(&with_out), "");
    assert_eq!(std::fs::read_to_string(&path).unwrap(), direct);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn list_names_every_registry_entry() {
    let out = ok(&["list"]);
    for name in ["find-exact", "quasi", "classical-general", "bigpan", "simple", "smallpan"] {
        assert!(out.contains(name), "{name}");
    }
}

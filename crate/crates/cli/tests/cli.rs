use std::collections::HashMap;
use std::process::{Command, Output};

use serde_json::Value;

fn dihedral(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dihedral"))
        .args(args)
        .env_remove("DIHEDRAL_OUTPUT_DIR")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn csv_rows(text: &str) -> (Vec<String>, Vec<HashMap<String, String>>) {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.deserialize().collect::<Result<_, _>>().unwrap();
    (header, rows)
}

/// Every CSV cell must equal the JSON value of the same record and field, and every
/// float must print back to the same text.
fn assert_round_trip(args: &[&str]) {
    let csv_out = dihedral(args);
    let mut json_args = args.to_vec();
    json_args.extend(["--format", "json"]);
    let json_out = dihedral(&json_args);
    assert_eq!(csv_out.status.code(), json_out.status.code());
    let (header, rows) = csv_rows(&stdout(&csv_out));
    let json: Vec<Value> = serde_json::from_str(&stdout(&json_out)).unwrap();
    assert_eq!(rows.len(), json.len());
    for (row, rec) in rows.iter().zip(&json) {
        let obj = rec.as_object().unwrap();
        let mut cols: Vec<&String> = header.iter().collect();
        cols.sort();
        assert_eq!(obj.keys().collect::<Vec<_>>(), cols);
        for key in &header {
            let cell = &row[key];
            match &obj[key] {
                Value::Null => assert_eq!(cell, ""),
                Value::Bool(b) => assert_eq!(cell, &b.to_string()),
                Value::String(s) => assert_eq!(cell, s),
                Value::Number(n) => {
                    let x: f64 = cell.parse().unwrap();
                    assert_eq!(Some(x), n.as_f64(), "{key}");
                    assert_eq!(x.to_string().parse::<f64>().unwrap(), x);
                    let digits = cell.trim_start_matches('-').replace('.', "");
                    let digits = digits.split(['e', 'E']).next().unwrap().trim_start_matches('0').trim_end_matches('0');
                    assert!(digits.len() <= 6 || n.is_u64(), "{key}={cell}");
                }
                other => panic!("nested value {other}"),
            }
        }
    }
}

#[test]
fn records_round_trip() {
    assert_round_trip(&["simulate", "qss-solve", "--n", "10", "--trials", "8", "--seed", "3"]);
    assert_round_trip(&["simulate", "ettinger-hoyer", "--n", "8", "--trials", "4"]);
    assert_round_trip(&["verify", "EZ", "--n", "8", "--m", "7", "--trials", "500"]);
    assert_round_trip(&["estimate", "table2"]);
    assert_round_trip(&["estimate", "interpolation", "--n", "64"]);
    assert_round_trip(&["estimate", "sieve", "--n", "300"]);
}

#[test]
fn simulate_writes_one_record_per_run_and_a_summary() {
    let o = dihedral(&["simulate", "qss-solve", "--n", "12", "--m", "11", "--trials", "100", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let (header, rows) = csv_rows(&stdout(&o));
    assert_eq!(header[..3], ["kind", "seed", "secret"]);
    assert_eq!(rows.len(), 101);
    for (i, r) in rows[..100].iter().enumerate() {
        assert_eq!(r["seed"], (1 + i).to_string());
        assert_eq!(r["status"], "ok");
    }
    let s = &rows[100];
    assert_eq!(s["kind"], "summary");
    let (lo, rate, hi): (f64, f64, f64) = (s["ci_low"].parse().unwrap(), s["success_rate"].parse().unwrap(), s["ci_high"].parse().unwrap());
    assert!(lo <= rate && rate <= hi);
}

#[test]
fn jobs_do_not_change_output() {
    let a = dihedral(&["simulate", "interpolate", "--n", "12", "--t", "4", "--trials", "12", "--jobs", "1"]);
    let b = dihedral(&["simulate", "interpolate", "--n", "12", "--t", "4", "--trials", "12", "--jobs", "5"]);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn exit_codes() {
    let missing = dihedral(&["simulate", "qss-solve"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("Usage"));
    assert_eq!(dihedral(&["simulate", "interpolate", "--n", "10"]).status.code(), Some(2));
    assert_eq!(dihedral(&["simulate", "qss-solve", "--n", "10", "--epsilon", "1.5"]).status.code(), Some(2));
    assert_eq!(dihedral(&["simulate", "qss-solve", "--n", "10", "--m", "10"]).status.code(), Some(2));
    assert_eq!(dihedral(&["estimate", "tree", "--m", "10"]).status.code(), Some(2));
    assert_eq!(dihedral(&["verify", "EZ", "--n", "10"]).status.code(), Some(2));
    // One sample has zero spread, so the 3-sigma check cannot pass.
    assert_eq!(dihedral(&["verify", "EZ", "--n", "10", "--m", "9", "--trials", "1"]).status.code(), Some(1));
    assert_eq!(dihedral(&["verify", "pf-exact", "--m", "10"]).status.code(), Some(0));
    assert_eq!(dihedral(&["verify", "sum-lemma", "--alpha", "1.414", "--n", "4096"]).status.code(), Some(0));
    let starved = dihedral(&["simulate", "qss-solve", "--n", "12", "--budget", "1", "--epsilon", "0.99", "--trials", "5"]);
    assert_eq!(starved.status.code(), Some(3));
    assert!(stdout(&starved).contains("budget_exhausted"));
}

#[test]
fn output_dir_env_resolves_relative_paths() {
    let dir = std::env::temp_dir().join(format!("dihedral-cli-test-{}", std::process::id()));
    let status = Command::new(env!("CARGO_BIN_EXE_dihedral"))
        .args(["estimate", "sieve", "--n", "100", "--output", "sub/sieve.csv"])
        .env("DIHEDRAL_OUTPUT_DIR", &dir)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(dir.join("sub/sieve.csv")).unwrap();
    assert!(text.starts_with("label,n,algorithm"));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn table2_rounded_rows() {
    let o = dihedral(&["estimate", "table2", "--rounded"]);
    let (_, rows) = csv_rows(&stdout(&o));
    assert_eq!(rows.len(), 25);
    let r = rows.iter().find(|r| r["label"] == "CSIDH-512" && r["algorithm"] == "alg4_qracm").unwrap();
    assert_eq!(r["queries"], "11.0");
    let r = rows.iter().find(|r| r["label"] == "CSIDH-512" && r["algorithm"] == "regev").unwrap();
    assert_eq!(r["queries"], "19.0");
}

#[test]
fn asymptotic_tree_json() {
    let o = dihedral(&["estimate", "tree", "--asymptotic", "--shape", "qracm"]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["shape"], "qracm");
    assert!(v["solution"]["nodes"].as_array().unwrap().len() >= 7);
    assert!(v["solution"]["steps"].as_array().is_some());
}

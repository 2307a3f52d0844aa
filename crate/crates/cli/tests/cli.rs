use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use orlicz_risk::io::read_values;
use serde_json::Value;
use tempfile::TempDir;

fn orisk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_orisk")).args(args).output().unwrap()
}

fn json(args: &[&str]) -> Value {
    let out = orisk(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn fixture(dir: &TempDir) -> PathBuf {
    write(dir, "portfolio.csv", "value\n-10\n-5\n0\n5\n")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn es_and_var_on_the_fixture() {
    let d = TempDir::new().unwrap();
    let p = fixture(&d);
    let r = json(&["es", "--input", s(&p), "--alpha", "0.5"]);
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["value"], 7.5);
    assert_eq!(json(&["var", "--input", s(&p), "--alpha", "0.25"])["value"], 5.0);
    assert_eq!(json(&["es", "--input", s(&p), "--alpha", "1"])["value"], 2.5);
}

#[test]
fn norm_matches_the_two_norm() {
    let d = TempDir::new().unwrap();
    let p = fixture(&d);
    let v = json(&["norm", "--input", s(&p), "--phi", "power:p=2"])["value"].as_f64().unwrap();
    let oracle = ((100.0 + 25.0 + 0.0 + 25.0) / 4.0f64).sqrt();
    assert!((v - oracle).abs() <= 1e-9 * oracle);
    let o = json(&["norm", "--input", s(&p), "--phi", "power:p=2", "--kind", "orlicz"])["value"]
        .as_f64()
        .unwrap();
    assert!((o - oracle).abs() <= 1e-6 * oracle);
}

#[test]
fn counterexample_fatou_probe_fails() {
    let r = json(&[
        "probe",
        "fatou",
        "--measure",
        "counterexample:phi=exp_minus_one",
        "--family",
        "exp-truncation",
        "--depth",
        "8",
    ]);
    assert_eq!(r["passed"], false);
    assert!(r["extras"]["liminf"].as_f64().unwrap().abs() < 1e-3);
    assert_eq!(r["extras"]["limit_value"], "+inf");
}

#[test]
fn counterexample_trace_is_minus_exp_minus_n() {
    let r = json(&["counterexample", "--depth", "5"]);
    for (i, p) in r["trace"].as_array().unwrap().iter().enumerate() {
        let n = (i + 1) as f64;
        assert!((p["value"].as_f64().unwrap() + (-n).exp()).abs() <= 1e-6, "{p}");
    }
    assert_eq!(r["limit_value"], "+inf");
    assert_eq!(r["limit_heart"]["in_heart"], false);
}

#[test]
fn exit_codes() {
    let d = TempDir::new().unwrap();
    let p = fixture(&d);
    assert_eq!(orisk(&["es", "--input", s(&p), "--alpha", "1.5"]).status.code(), Some(2));
    assert_eq!(orisk(&["es", "--input", "/nonexistent.csv", "--alpha", "0.5"]).status.code(), Some(1));
    assert_eq!(orisk(&["es", "--input", s(&p)]).status.code(), Some(1));
    assert_eq!(orisk(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(orisk(&["norm", "--input", s(&p), "--phi", "cosh"]).status.code(), Some(1));
    let bad = write(&d, "bad.csv", "value\n1\nabc\n");
    assert_eq!(orisk(&["es", "--input", s(&bad), "--alpha", "0.5"]).status.code(), Some(1));
    let inf = write(&d, "k.csv", "candidate_id,alpha,weight,gamma\na,0.5,1,inf\n");
    let m = format!("kusuoka:{}", s(&inf));
    assert_eq!(orisk(&["kusuoka", "--input", s(&p), "--measure", &m]).status.code(), Some(2));
    assert_eq!(orisk(&["--help"]).status.code(), Some(0));
}

#[test]
fn kusuoka_reports_the_maximizer() {
    let d = TempDir::new().unwrap();
    let p = fixture(&d);
    let k = write(
        &d,
        "k.csv",
        "candidate_id,alpha,weight,gamma\ntail,0.5,1,0\nmix,0.25,0.5,1\nmix,1,0.5,1\n",
    );
    let r = json(&["kusuoka", "--input", s(&p), "--measure", s(&k)]);
    assert_eq!(r["value"], 7.5);
    assert_eq!(r["candidate_id"], "tail");
}

#[test]
fn condexp_csv_round_trips() {
    let d = TempDir::new().unwrap();
    let x = write(&d, "x.csv", "value\n0.1\n0.2\n0.7\n-1e-17\n3.3333333333333335\n");
    let pi = write(&d, "pi.csv", "block_id\n0\n0\n1\n1\n1\n");
    let out = d.path().join("c.csv");
    let st = orisk(&["condexp", "--input", s(&x), "--partition", s(&pi), "--format", "csv", "--output", s(&out)]);
    assert!(st.status.success());
    let from_csv = read_values(&out).unwrap();
    let r = json(&["condexp", "--input", s(&x), "--partition", s(&pi)]);
    let from_json: Vec<f64> = r["values"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(from_csv.values(), from_json.as_slice());
    assert_eq!(from_json[0], (0.1 + 0.2) / 2.0);
    let again = d.path().join("c2.csv");
    orisk(&["condexp", "--input", s(&out), "--partition", s(&pi), "--format", "csv", "--output", s(&again)]);
    assert_eq!(read_values(&again).unwrap(), from_csv);
}

#[test]
fn dual_agrees_with_es() {
    let d = TempDir::new().unwrap();
    let p = fixture(&d);
    let r = json(&["dual", "--input", s(&p), "--alpha", "0.5"]);
    assert!((r["value"].as_f64().unwrap() - 7.5).abs() < 1e-12);
    let z = write(&d, "z.csv", "z\n2\n2\n0\n0\n");
    let b = json(&["dual", "--input", s(&p), "--measure", "es:alpha=0.5", "--density", s(&z)]);
    assert!(b["lower"].as_f64().unwrap() <= b["primal"].as_f64().unwrap() + 1e-9);
}

#[test]
fn extend_reaches_the_limit() {
    let r = json(&[
        "extend", "--measure", "es:alpha=0.5", "--law", "neg_exp:rate=1", "--phi", "exp_minus_one", "--depth", "12",
    ]);
    let values = r["values"].as_array().unwrap();
    let last = values.last().unwrap().as_f64().unwrap();
    assert!((last - (1.0 + 2f64.ln())).abs() <= 1e-3, "{last}");
}

#[test]
fn coex_default_chain() {
    let d = TempDir::new().unwrap();
    let p = fixture(&d);
    let r = json(&["probe", "coex", "--input", s(&p)]);
    assert_eq!(r["values"], serde_json::json!([5.0, 2.5, 0.0]));
}

#[test]
fn probes_are_byte_identical_across_reruns_and_threads() {
    let d = TempDir::new().unwrap();
    let cfg = write(&d, "probe.cfg", "population=20\ntrials=30\ncount=12\n");
    let p = fixture(&d);
    let runs: &[&[&str]] = &[
        &["probe", "axioms", "--measure", "es:alpha=0.3"],
        &["probe", "fatou", "--measure", "es:alpha=0.3"],
        &["probe", "dilatation", "--measure", "es:alpha=0.3", "--input", s(&p)],
        &["probe", "blowup", "--law", "exp:rate=1"],
    ];
    for args in runs {
        let mut a = args.to_vec();
        a.extend(["--seed", "11", "--config", s(&cfg)]);
        let one = orisk(&a);
        assert!(one.status.success(), "{}", String::from_utf8_lossy(&one.stderr));
        assert_eq!(one.stdout, orisk(&a).stdout);
        a.extend(["--threads", "4"]);
        assert_eq!(one.stdout, orisk(&a).stdout);
        let r: Value = serde_json::from_slice(&one.stdout).unwrap();
        if r.get("passed").is_some() {
            assert_eq!(r["passed"], true, "{r}");
        }
    }
}

#[test]
fn inputs_are_not_mutated() {
    let d = TempDir::new().unwrap();
    let p = fixture(&d);
    let before = std::fs::read(&p).unwrap();
    orisk(&["es", "--input", s(&p), "--alpha", "0.5", "--output", s(&d.path().join("o.json"))]);
    assert_eq!(std::fs::read(&p).unwrap(), before);
}

use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn corpus(rel: &str) -> String {
    let mut p = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    p.push("../core/corpus");
    p.push(rel);
    p.to_string_lossy().into_owned()
}

fn muspec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_muspec")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is json")
}

#[test]
fn run_listing1_has_markers() {
    let out = muspec(&[
        "run",
        &corpus("comb/listing1.muasm"),
        "--policy",
        &corpus("comb/comb.policy.json"),
        "--sem",
        "b+s",
        "--mode",
        "concrete",
        "--json",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let kinds: Vec<&str> = v["trace"].as_array().unwrap().iter().map(|o| o["t"].as_str().unwrap()).collect();
    for k in ["start", "skip", "rollback", "load", "store", "pc"] {
        assert!(kinds.contains(&k), "missing {k}");
    }
    assert_eq!(v["status"], "terminated");
    assert_eq!(v["config"]["sem"], "b+s");
    let proj: Vec<&str> = v["projection"].as_array().unwrap().iter().map(|o| o["t"].as_str().unwrap()).collect();
    assert_eq!(proj, ["store", "store", "pc"]);
}

#[test]
fn run_empty_program() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.muasm");
    std::fs::write(&path, "").unwrap();
    let out = muspec(&["run", path.to_str().unwrap(), "--sem", "b", "--json"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["trace"], Value::Array(vec![]));
}

#[test]
fn parse_error_exits_2_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.muasm");
    std::fs::write(&path, "skip\nload x\n").unwrap();
    let out = muspec(&["run", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn bad_policy_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.json");
    std::fs::write(&path, "{\"public\": 3}").unwrap();
    let out = muspec(&["check", &corpus("comb/listing1.muasm"), "--policy", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_flag_values_exit_2() {
    let prog = corpus("comb/listing1.muasm");
    assert_eq!(muspec(&["check", &prog, "--sem", "b+x"]).status.code(), Some(2));
    assert_eq!(muspec(&["check", &prog, "--mode", "fast"]).status.code(), Some(2));
    assert_eq!(muspec(&["check", &prog, "--bits", "4", "--domain-bits", "5"]).status.code(), Some(2));
}

#[test]
fn listing4_insecure_under_s_r() {
    let out = muspec(&[
        "check",
        &corpus("comb/listing4.muasm"),
        "--policy",
        &corpus("comb/comb.policy.json"),
        "--sem",
        "s+r",
        "--json",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let v = json(&out);
    assert_eq!(v["status"], "insecure");
    let w = &v["witness"];
    let i = w["index"].as_u64().unwrap() as usize;
    let (a, b) = (&w["trace1"][i], &w["trace2"][i]);
    assert_eq!(a["t"], "load");
    assert_eq!(b["t"], "load");
    assert_ne!(a["addr"], b["addr"]);
}

#[test]
fn listing4_secure_under_b_s() {
    let out = muspec(&[
        "check",
        &corpus("comb/listing4.muasm"),
        "--policy",
        &corpus("comb/comb.policy.json"),
        "--sem",
        "b+s",
    ]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn fenced_listing1_secure_everywhere() {
    for mode in ["concrete", "symbolic"] {
        let out = muspec(&[
            "check",
            &corpus("comb/listing1_fence.muasm"),
            "--policy",
            &corpus("comb/comb.policy.json"),
            "--sem",
            "b+s+r",
            "--mode",
            mode,
        ]);
        assert_eq!(out.status.code(), Some(0), "{mode}");
    }
}

#[test]
fn inconclusive_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("loop.muasm");
    std::fs::write(&path, "L:\n jmp @L\n").unwrap();
    let out = muspec(&["check", path.to_str().unwrap(), "--fuel", "50"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn check_json_is_deterministic() {
    let args = [
        "check",
        &corpus("comb/listing5.muasm"),
        "--policy",
        &corpus("comb/comb.policy.json"),
        "--json",
    ]
    .map(String::from);
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let a = muspec(&args);
    let b = muspec(&args);
    assert_eq!(a.status.code(), Some(1));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn corpus_comb_matches() {
    let out = muspec(&["corpus", "comb", "--json"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["ok"], true);
    assert_eq!(v["suites"][0]["total"], 56);
}

#[test]
fn corpus_stl_and_rsb_single_source() {
    let out = muspec(&["corpus", "stl", "--sem", "s"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("26/26"));
    let out = muspec(&["corpus", "rsb", "--sem", "r", "--mode", "symbolic"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("15/15"));
}

#[test]
fn corpus_missing_files_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = muspec(&["corpus", "comb", "--corpus-dir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(
        dir.path().join("manifest.json"),
        r#"{"suites":[{"name":"comb","knobs":{"bits":8,"domain_bits":2,"window":4,"rsb_size":2,"fuel":100},
            "selectors":["b"],"cases":[{"name":"x","program":"x.muasm","policy":"x.json","insecure":[]}]}]}"#,
    )
    .unwrap();
    let out = muspec(&["corpus", "comb", "--corpus-dir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("x.muasm"));
}

#[test]
fn unknown_suite_exits_2() {
    assert_eq!(muspec(&["corpus", "spectre9"]).status.code(), Some(2));
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/scenarios").join(name)
}

fn byzregs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_byzregs")).args(args).env_remove("BYZREGS_SEED").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn verdicts(v: &Value) -> &Vec<Value> {
    v["verdicts"].as_array().unwrap()
}

#[test]
fn run_ok_scenario_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v.json");
    let trace = dir.path().join("t.jsonl");
    let o = byzregs(&[
        "run",
        "--scenario",
        scenario("ok.json").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&out);
    assert!(verdicts(&v).iter().all(|v| v["status"] == "pass"));
    assert_eq!(verdicts(&v).len(), 5);
    let lines = fs::read_to_string(&trace).unwrap();
    assert!(lines.lines().count() > 10);
    for l in lines.lines() {
        let e: Value = serde_json::from_str(l).unwrap();
        assert!(e.get("step").is_some() && e.get("kind").is_some());
    }
}

#[test]
fn run_inversion_candidate_reports_property2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v.json");
    let o = byzregs(&[
        "run",
        "--scenario",
        scenario("inversion_candidate.json").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
    let v = json(&out);
    let p2 = verdicts(&v).iter().find(|v| v["class"] == "Property2").unwrap();
    assert_eq!(p2["status"], "violation");
    assert!(!p2["witnesses"].as_array().unwrap().is_empty());
}

#[test]
fn run_blocking_boundary_is_pending_outside_guarantee() {
    let o = byzregs(&["run", "--scenario", scenario("blocking_boundary.json").to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let wf = verdicts(&v).iter().find(|v| v["class"] == "WaitFreedom").unwrap();
    assert_eq!(wf["outside_guarantee"], true);
    assert!(wf["explanation"].as_str().unwrap().starts_with("pending outside guarantee"));
}

#[test]
fn missing_or_malformed_input_exits_2() {
    assert_eq!(code(&byzregs(&["run", "--scenario", "/nonexistent/missing.json"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\"construction\": 3}").unwrap();
    assert_eq!(code(&byzregs(&["run", "--scenario", bad.to_str().unwrap()])), 2);
    assert_eq!(code(&byzregs(&["sweep", "--construction", "algo1", "--n", "5..3"])), 2);
    assert_eq!(code(&byzregs(&["sweep", "--construction", "algo1", "--n", "3", "--runs", "0"])), 2);
    assert_eq!(code(&byzregs(&["sweep", "--construction", "algo1", "--n", "3", "--faults", "nobody"])), 2);
    assert_eq!(code(&byzregs(&["frobnicate"])), 2);
    let ok = scenario("ok.json");
    assert_eq!(code(&byzregs(&["check", "--scenario", ok.to_str().unwrap(), "--trace", "/nonexistent/t.jsonl"])), 2);
}

#[test]
fn outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for i in 0..2 {
        let out = dir.path().join(format!("v{i}.json"));
        let trace = dir.path().join(format!("t{i}.jsonl"));
        let sweep = dir.path().join(format!("s{i}.json"));
        byzregs(&[
            "run",
            "--scenario",
            scenario("ok.json").to_str().unwrap(),
            "--seed",
            "9",
            "--out",
            out.to_str().unwrap(),
            "--trace",
            trace.to_str().unwrap(),
        ]);
        byzregs(&[
            "sweep",
            "--construction",
            "algo1",
            "--n",
            "2..3",
            "--runs",
            "20",
            "--seed",
            "4",
            "--out",
            sweep.to_str().unwrap(),
        ]);
        files.push([out, trace, sweep].map(|p| fs::read(p).unwrap()));
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn seed_env_var_is_the_default_seed() {
    let flag = byzregs(&[
        "sweep",
        "--construction",
        "algo1",
        "--n",
        "3",
        "--runs",
        "5",
        "--seed",
        "42",
        "--faults",
        "writer-crash",
    ]);
    let env = Command::new(env!("CARGO_BIN_EXE_byzregs"))
        .args(["sweep", "--construction", "algo1", "--n", "3", "--runs", "5", "--faults", "writer-crash"])
        .env("BYZREGS_SEED", "42")
        .output()
        .unwrap();
    assert_eq!(flag.stdout, env.stdout);
}

#[test]
fn sweep_summary_shape() {
    let o = byzregs(&[
        "sweep",
        "--construction",
        "algo1",
        "--n",
        "2..4",
        "--runs",
        "10",
        "--faults",
        "all-correct,writer-crash+one-malicious-reader",
    ]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["runs"], 60);
    assert!(v["violations"].as_object().unwrap().is_empty());
    assert!(v["pending_outside_guarantee"].is_u64());
}

#[test]
fn attack_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a.json");
    let trace = dir.path().join("w.jsonl");
    let o = byzregs(&[
        "attack",
        "--construction",
        "naive-gossip",
        "--n",
        "3",
        "--out",
        out.to_str().unwrap(),
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
    assert_eq!(json(&out)["outcome"]["outcome"], "violation_witness");
    let events: Vec<Value> =
        fs::read_to_string(&trace).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(events.iter().all(|e| e["proc"] != 0));
    assert_eq!(code(&byzregs(&["attack", "--construction", "algo1", "--n", "3"])), 1);
    assert_eq!(code(&byzregs(&["attack", "--construction", "atomic-1wnr", "--n", "3"])), 0);
    assert_eq!(code(&byzregs(&["attack", "--construction", "algo3", "--n", "3"])), 0);
    assert_eq!(code(&byzregs(&["attack", "--construction", "naive-gossip", "--n", "2"])), 2);
    assert_eq!(code(&byzregs(&["attack", "--construction", "atomic-1wnr", "--rule", "no-full-registers"])), 2);
}

#[test]
fn check_agrees_with_run() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["ok.json", "inversion_candidate.json", "blocking_boundary.json"] {
        let sc = scenario(name);
        let run_out = dir.path().join("run.json");
        let check_out = dir.path().join("check.json");
        let trace = dir.path().join("t.jsonl");
        let a = byzregs(&[
            "run",
            "--scenario",
            sc.to_str().unwrap(),
            "--out",
            run_out.to_str().unwrap(),
            "--trace",
            trace.to_str().unwrap(),
        ]);
        let b = byzregs(&[
            "check",
            "--scenario",
            sc.to_str().unwrap(),
            "--trace",
            trace.to_str().unwrap(),
            "--out",
            check_out.to_str().unwrap(),
        ]);
        assert_eq!(code(&a), code(&b), "{name}");
        assert_eq!(json(&run_out), json(&check_out), "{name}");
    }
}

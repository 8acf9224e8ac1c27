use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn msearch(cache: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_msearch"))
        .env_remove("MSEARCH_CACHE")
        .arg("--cache-dir")
        .arg(cache)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

#[test]
fn enumerate_prints_counts() {
    let dir = tempfile::tempdir().unwrap();
    let v = stdout_json(&msearch(dir.path(), &["enumerate", "--m", "2", "--n", "4"]));
    assert_eq!(v["counts"], serde_json::json!(["1", "1", "2", "5", "14"]));
    assert!(dir.path().join("tau-m2-n4.json").exists());
}

#[test]
fn enumerate_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = msearch(dir.path(), &["enumerate", "--m", "3", "--n", "5", "--format", "csv"]);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "n,tau\n0,1\n1,1\n2,1\n3,3\n4,6\n5,16\n");
}

#[test]
fn leaves_constant_at_m2() {
    let dir = tempfile::tempdir().unwrap();
    let v = stdout_json(&msearch(dir.path(), &["constants", "--m", "2", "--toll", "leaves"]));
    assert_eq!(v["toll"]["d1"], "0.25");
    assert_eq!(v["singular"]["rho"], "0.25");
    assert_eq!(v["config"]["command"]["command"], "constants");
}

#[test]
fn unknown_flag_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = msearch(dir.path(), &["enumerate", "--m", "2", "--n", "3", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn module_error_exits_1_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let out = msearch(dir.path(), &["enumerate", "--m", "1", "--n", "3"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("m = 1"));
    // irrational toll in exact mode
    let out = msearch(dir.path(), &["moments", "--m", "2", "--toll", "shape", "--n", "3"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn help_lists_flags() {
    let dir = tempfile::tempdir().unwrap();
    let out = msearch(dir.path(), &["simulate", "--help"]);
    let text = String::from_utf8(out.stdout).unwrap();
    for flag in ["--m", "--n", "--toll", "--reps", "--seed", "--threads", "--model", "--out", "--histogram", "--tree"] {
        assert!(text.contains(flag), "{flag} missing from help");
    }
}

#[test]
fn moments_csv_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("m.csv");
    let out = msearch(
        dir.path(),
        &["moments", "--m", "2", "--toll", "leaves", "--smax", "2", "--n", "3", "--out", csv.to_str().unwrap()],
    );
    assert!(out.status.success());
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,s,mu_exact,mean,var,skew,kurt"));
    // five shapes on three keys: leaves 1,1,1,1,2
    assert!(text.contains("\n3,1,6/5,1.2,0.16,"));
    assert!(text.contains("\n3,2,8/5,"));
}

#[test]
fn limits_use_the_cache() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["limits", "--law", "yalpha:1", "--smax", "4"];
    let first = msearch(dir.path(), &args);
    let v = stdout_json(&first);
    assert_eq!(v["moments"][2].as_str().unwrap()[..12], *"1.6666666666");
    let cached: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert!(cached.iter().any(|f| f.to_string_lossy().starts_with("limits-yalpha-1")), "{cached:?}");
    let second = msearch(dir.path(), &args);
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let tree = dir.path().join("t.json");
    let run = |threads: &str| {
        let out = msearch(
            dir.path(),
            &[
                "simulate", "--m", "3", "--n", "60", "--toll", "leaves", "--reps", "500", "--seed", "11", "--threads", threads, "--out",
                a.to_str().unwrap(), "--tree", tree.to_str().unwrap(),
            ],
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        (std::fs::read(&a).unwrap(), std::fs::read(&tree).unwrap())
    };
    let first = run("1");
    let again = run("1");
    assert_eq!(first, again);
    let t: Value = serde_json::from_slice(&first.1).unwrap();
    assert_eq!(t["size"], 60);
    let v: Value = serde_json::from_slice(&first.0).unwrap();
    assert_eq!(v["summaries"][0]["reps"], 500);
}

#[test]
fn cache_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_msearch"))
        .env("MSEARCH_CACHE", dir.path())
        .args(["enumerate", "--m", "3", "--n", "7"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("tau-m3-n7.json").exists());
}

#[test]
fn fast_verify_passes_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.json");
    let out = msearch(dir.path(), &["verify", "--suite", "fast", "--report", report.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    let checks = v["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 7);
    assert!(checks.iter().all(|c| c["status"] == "pass"));
}

#[test]
fn unknown_check_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = msearch(dir.path(), &["verify", "--only", "no-such-check"]);
    assert_eq!(out.status.code(), Some(1));
}

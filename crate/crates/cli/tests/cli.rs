use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tasksel"))
}

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn doomed() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/doomed.toml")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

#[test]
fn greedy_prints_a_json_report() {
    let s = scenario("seven.toml");
    let out = run(&["greedy", "--scenario", s.to_str().unwrap(), "--level", "high"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["method"], "greedy");
    assert_eq!(v["config"]["disturbance_level"], "high");
    assert!(v["settings"]["selector"]["c_inf"].is_number());
    assert!(v["metrics"]["waypoints_arrived"].is_number());
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let s = scenario("seven.toml");
    let args = ["ga", "--scenario", s.to_str().unwrap(), "--seed", "7"];
    assert_eq!(run(&args).stdout, run(&args).stdout);
}

#[test]
fn rollout_needs_a_mask_of_the_right_length() {
    let s = scenario("seven.toml");
    let s = s.to_str().unwrap();
    assert_eq!(run(&["rollout", "--scenario", s]).status.code(), Some(1));
    assert_eq!(run(&["rollout", "--scenario", s, "--mask", "101"]).status.code(), Some(1));
    let ok = run(&["rollout", "--scenario", s, "--mask", "1111111", "--format", "csv"]);
    assert_eq!(ok.status.code(), Some(0));
    let text = String::from_utf8(ok.stdout).unwrap();
    assert!(text.starts_with("method,seed,repeat,mask"));
    assert!(text.contains("rollout,0,0,1111111"));
}

#[test]
fn no_feasible_subset_exits_with_two() {
    let d = doomed();
    for cmd in ["greedy", "ga"] {
        let out = run(&[cmd, "--scenario", d.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(2), "{cmd}");
    }
}

#[test]
fn missing_scenario_exits_with_one() {
    let out = run(&["greedy", "--scenario", "/nonexistent/scenario.toml"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn out_dir_receives_report_and_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario("seven.toml");
    let out = run(&[
        "exhaustive",
        "--scenario",
        s.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("seven_exhaustive_s0_r0.json")).unwrap())
            .unwrap();
    assert_eq!(report["evaluations"], 128);
    let traj = report["trajectory"].as_str().unwrap();
    let csv = std::fs::read_to_string(dir.path().join(traj)).unwrap();
    assert!(csv.starts_with("t,x0,x1,u0,u1,h_0,lambda_0"));
}

#[test]
fn compare_writes_one_table() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario("seven.toml");
    let out = run(&[
        "compare",
        "--scenario",
        s.to_str().unwrap(),
        "--methods",
        "greedy,ga",
        "--repeats",
        "3",
        "--seeds",
        "2",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let table: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("seven_compare.json")).unwrap())
            .unwrap();
    assert_eq!(table["rows"].as_array().unwrap().len(), 1 + 2 * 3);
    assert_eq!(table["summary"].as_array().unwrap().len(), 2);
    let summary = String::from_utf8(out.stderr).unwrap();
    assert!(summary.contains("greedy"));
}

#[test]
fn compare_records_errors_per_row() {
    let d = doomed();
    let out = run(&["compare", "--scenario", d.to_str().unwrap(), "--methods", "greedy,rollout"]);
    assert_eq!(out.status.code(), Some(0));
    let table: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let rows = table["rows"].as_array().unwrap();
    assert_eq!(rows[0]["error"]["kind"], "no-feasible-subset");
    assert_eq!(rows[1]["error"]["kind"], "mask");
}

#[test]
fn receding_flags_are_honored() {
    let s = scenario("seven.toml");
    let out = run(&[
        "ga",
        "--receding",
        "--scenario",
        s.to_str().unwrap(),
        "--replan-every",
        "100",
        "--lookahead",
        "150",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["method"], "ga-receding");
    assert_eq!(v["settings"]["replan_every"], 100);
    assert_eq!(v["segments"], 4);
}

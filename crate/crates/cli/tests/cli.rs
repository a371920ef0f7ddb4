use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bagging::harness::{write_xyz, Scenario};
use bagging::sim::BagSim;
use serde_json::Value;

fn bagging(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bagging"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn error_record(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("an error line");
    serde_json::from_str(line).expect("error record is JSON")
}

#[test]
fn run_bundled_example() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = scenarios().join("coffee_box.toml");
    let out = bagging(&[
        "run",
        scenario.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let printed: Value = serde_json::from_slice(&out.stdout).unwrap();
    let file: Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(printed, file);
    assert_eq!(file["success"], true);

    let log = std::fs::read_to_string(dir.path().join("log.jsonl")).unwrap();
    let records: Vec<Value> = log
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(records[0]["record"], "scenario");
    let last = records.last().unwrap();
    assert_eq!(last["record"], "step");
    let final_error = file["final_error"].as_f64().unwrap();
    assert!((last["mean_error"].as_f64().unwrap() - final_error).abs() < 1e-12);
    assert!(final_error < file["success_tol"].as_f64().unwrap());
    assert!(dir.path().join("timing.json").exists());
}

#[test]
fn seed_flag_overrides_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = scenarios().join("triangular_prism.toml");
    let out = bagging(&[
        "run",
        scenario.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--seed",
        "42",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["seed"], 42);
}

#[test]
fn missing_scenario_is_io() {
    let out = bagging(&["run", "/nonexistent/scenario.toml"]);
    assert_eq!(out.status.code(), Some(5));
    let e = error_record(&out);
    assert_eq!(e["error"], "io");
    assert_eq!(e["exit_code"], 5);
}

#[test]
fn invalid_lambda_is_validation() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(
        &path,
        "[object]\npreset = \"coffee_box\"\n[generation]\nlambda1 = 1.5\n",
    )
    .unwrap();
    let out = bagging(&["run", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let e = error_record(&out);
    assert_eq!(e["error"], "validation");
    assert_eq!(e["message"], "lambda1 must be in (0,1)");
}

#[test]
fn blocked_goal_exits_with_planning_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("blocked.toml");
    std::fs::write(
        &path,
        "[object]\npreset = \"coffee_box\"\n[planner]\nmax_iterations = 100\n\
         [[obstacles]]\nmin = [-0.4, -0.4, 0.36]\nmax = [0.6, 0.4, 0.42]\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = bagging(&[
        "run",
        path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_record(&out)["error"], "planning");
    let report: Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["stages"]["planning"]["status"], "failed");
    assert_eq!(report["stages"]["servoing"]["status"], "skipped");
}

#[test]
fn extract_malformed_cloud_is_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.xyz");
    std::fs::write(&path, "0.1 0.2 0.3\n0.1 oops 0.3\n").unwrap();
    let out = bagging(&["extract", path.to_str().unwrap(), "--n-x", "32"]);
    assert_eq!(out.status.code(), Some(2));
    let e = error_record(&out);
    assert_eq!(e["error"], "parse");
    assert_eq!(e["line"], 2);
}

#[test]
fn extract_simulated_cloud() {
    let dir = tempfile::tempdir().unwrap();
    let s = Scenario::with_preset("coffee_box");
    let mut sim = BagSim::new(s.bag, s.grippers.state(&s.bag).unwrap(), 3).unwrap();
    let path = dir.path().join("cloud.xyz");
    write_xyz(&path, sim.capture().points()).unwrap();
    let out = bagging(&["extract", path.to_str().unwrap(), "--n-x", "24"]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["soi"].as_array().unwrap().len(), 24);
    let r = v["rim_perimeter"].as_f64().unwrap();
    assert!((r / 0.68 - 1.0).abs() < 0.05, "{r}");
}

#[test]
fn plan_emits_path_nodes() {
    let scenario = scenarios().join("coffee_box.toml");
    let out = bagging(&["plan", scenario.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let nodes: Vec<Value> = text
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert!(nodes.len() >= 2);
    for (i, n) in nodes.iter().enumerate() {
        assert_eq!(n["record"], "path_node");
        assert_eq!(n["index"], i);
        assert_eq!(n["points"].as_array().unwrap().len(), 32);
    }
    assert_eq!(nodes[0]["segment"], "pre_bagging");
    assert_eq!(nodes.last().unwrap()["segment"], "bagging");
}

#[test]
fn batch_table_and_json() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(
        scenarios().join("grapefruit.toml"),
        dir.path().join("grapefruit.toml"),
    )
    .unwrap();
    let d = dir.path().to_str().unwrap();
    let out = bagging(&["batch", d, "--trials", "2", "--json"]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let row = &v["rows"][0];
    assert_eq!(row["scenario"], "grapefruit");
    assert_eq!(row["trials"], 2);
    assert!(row["manipulation_successes"].as_u64().unwrap() <= 2);

    let out = bagging(&["batch", d, "--trials", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.lines().next().unwrap().contains("plan time"));
    assert!(table.contains("grapefruit"));

    let out = bagging(&["batch", d, "--trials", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_record(&out)["error"], "validation");
}

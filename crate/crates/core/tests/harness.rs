use std::path::Path;

use bagging::geometry::Point3;
use bagging::harness::{
    load_scenario, parse_scenario, preset, read_log, run_batch, run_pipeline, write_outputs,
    write_xyz, HarnessError, LogRecord, Scenario, Stage, StageStatus,
};
use bagging::sim::BagSim;

const MINIMAL: &str = "[object]\npreset = \"coffee_box\"\n";

#[test]
fn minimal_scenario_runs_to_success() {
    let s = parse_scenario(MINIMAL, "minimal.toml").unwrap();
    let run = run_pipeline(&s).unwrap();
    let r = &run.report;
    assert!(r.success, "{r:?}");
    assert_eq!(r.failed_stage(), None);
    assert!(r.final_error.unwrap() < s.success_tol);
    assert!(r.perimeter_drift.unwrap().abs() < 0.02);

    let kinds: Vec<&str> = run.records.iter().map(LogRecord::kind).collect();
    assert_eq!(
        &kinds[..4],
        ["scenario", "cloud", "extraction", "generation"]
    );
    let nodes = kinds.iter().filter(|k| **k == "path_node").count();
    assert_eq!(Some(nodes), r.path_nodes);
    assert_eq!(kinds.last(), Some(&"step"));
    match run.records.last().unwrap() {
        LogRecord::Step { u, mean_error, .. } => {
            assert!(u.is_none());
            assert_eq!(Some(*mean_error), r.final_error);
        }
        _ => unreachable!(),
    }
}

#[test]
fn out_of_range_lambda1_is_a_validation_error() {
    let text = format!("{MINIMAL}[generation]\nlambda1 = 1.5\n");
    match parse_scenario(&text, "bad.toml") {
        Err(HarnessError::Validation(m)) => assert_eq!(m, "lambda1 must be in (0,1)"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn type_errors_carry_the_line() {
    let text = format!("{MINIMAL}seed = 1\n[bag]\nn_x = \"many\"\n");
    match parse_scenario(&text, "typed.toml") {
        Err(HarnessError::Parse {
            line, source_name, ..
        }) => {
            assert_eq!(source_name, "typed.toml");
            assert_eq!(line, 5);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn presets_match_their_files() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("presets");
    for name in [
        "coffee_box",
        "canned_cylinder",
        "grapefruit",
        "triangular_prism",
        "bound_objects",
    ] {
        let text = std::fs::read_to_string(dir.join(format!("{name}.toml"))).unwrap();
        let table: toml::Table = text.parse().unwrap();
        let want: Vec<Point3> = table["vertices"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| {
                let c: Vec<f64> = v
                    .as_array()
                    .unwrap()
                    .iter()
                    .map(|x| x.as_float().unwrap())
                    .collect();
                Point3::new(c[0], c[1], c[2])
            })
            .collect();
        assert_eq!(preset(name).unwrap(), want, "{name}");
    }
}

#[test]
fn same_seed_gives_identical_outputs() {
    let mut s = Scenario::with_preset("triangular_prism");
    s.seed = 11;
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        write_outputs(d.path(), &run_pipeline(&s).unwrap()).unwrap();
    }
    for f in ["log.jsonl", "report.json"] {
        let a = std::fs::read(dirs[0].path().join(f)).unwrap();
        let b = std::fs::read(dirs[1].path().join(f)).unwrap();
        assert!(a == b, "{f} differs");
    }
    assert!(dirs[0].path().join("timing.json").exists());
}

#[test]
fn log_file_round_trips() {
    let run = run_pipeline(&Scenario::with_preset("coffee_box")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_outputs(dir.path(), &run).unwrap();
    assert_eq!(
        read_log(&dir.path().join("log.jsonl")).unwrap(),
        run.records
    );
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["stages"]["servoing"]["status"], "ok");
    assert!(report.get("timing").is_none());
}

#[test]
fn blocked_goal_fails_planning_and_skips_servoing() {
    let text = format!(
        "{MINIMAL}[planner]\nmax_iterations = 100\n\
         [[obstacles]]\nmin = [-0.4, -0.4, 0.36]\nmax = [0.6, 0.4, 0.42]\n"
    );
    let s = parse_scenario(&text, "blocked.toml").unwrap();
    let r = run_pipeline(&s).unwrap().report;
    assert_eq!(r.failed_stage(), Some(Stage::Planning));
    assert!(r.failure_message().unwrap().contains("bagging"));
    assert_eq!(r.stages.servoing, StageStatus::Skipped);
    assert!(!r.success);
}

#[test]
fn initial_cloud_file_replaces_the_capture() {
    let dir = tempfile::tempdir().unwrap();
    let s = Scenario::with_preset("coffee_box");
    let mut sim = BagSim::new(s.bag, s.grippers.state(&s.bag).unwrap(), 5).unwrap();
    write_xyz(&dir.path().join("first.xyz"), sim.capture().points()).unwrap();
    let scenario = dir.path().join("s.toml");
    std::fs::write(
        &scenario,
        format!("initial_cloud = \"first.xyz\"\n{MINIMAL}"),
    )
    .unwrap();
    let s = load_scenario(&scenario).unwrap();
    assert_eq!(
        s.initial_cloud.as_deref(),
        Some(dir.path().join("first.xyz").as_path())
    );
    let run = run_pipeline(&s).unwrap();
    assert!(run.report.stages.extraction.is_ok());
    match &run.records[2] {
        LogRecord::Extraction { truth, .. } => assert!(truth.is_none()),
        other => panic!("{other:?}"),
    }
}

#[test]
fn missing_cloud_is_an_io_error() {
    let mut s = Scenario::with_preset("coffee_box");
    s.initial_cloud = Some("/nonexistent/cloud.xyz".into());
    assert!(matches!(run_pipeline(&s), Err(HarnessError::Io { .. })));
}

#[test]
fn batch_aggregates_per_scenario() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("a.toml"),
        "name = \"box\"\n[object]\npreset = \"coffee_box\"\n",
    )
    .unwrap();
    std::fs::write(
        dir.path().join("b.toml"),
        "name = \"prism\"\n[object]\npreset = \"triangular_prism\"\n",
    )
    .unwrap();
    std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
    let summary = run_batch(dir.path(), 2).unwrap();
    assert_eq!(summary.rows.len(), 2);
    assert_eq!(summary.rows[0].scenario, "box");
    for (row, reports) in summary.rows.iter().zip(&summary.reports) {
        assert_eq!(row.trials, 2);
        assert_eq!(reports.len(), 2);
        assert_eq!(
            row.planning_successes,
            reports.iter().filter(|r| r.stages.planning.is_ok()).count()
        );
        assert!(row.manipulation_successes <= row.planning_successes);
        assert_ne!(reports[0].seed, reports[1].seed);
    }
    assert!(summary.to_string().contains("prism"));
}

use std::path::Path;
use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::log::{write_log, LogRecord};
use super::scenario::Scenario;
use super::{read_xyz, HarnessError};
use crate::extraction::extract_with_model;
use crate::generation::{generate_goal_soi, make_bagging_soi, ConstraintReport};
use crate::geometry::{polyline_perimeter, Point3};
use crate::planning::{plan_full, Segment};
use crate::servo::{run_controller, Outcome, Plant, ServoError};
use crate::sim::BagSim;
use crate::soi::{best_alignment, max_point_distance, mean_point_distance, OrderedSoi};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Extraction,
    Generation,
    Planning,
    Servoing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum StageStatus {
    Ok,
    Failed { error: String },
    Skipped,
}

impl StageStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, StageStatus::Ok)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stages {
    pub extraction: StageStatus,
    pub generation: StageStatus,
    pub planning: StageStatus,
    pub servoing: StageStatus,
}

/// Wall-clock seconds per stage. Kept out of the report so reports are
/// reproducible byte for byte.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub extraction_s: f64,
    pub generation_s: f64,
    pub planning_s: f64,
    pub servoing_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub perception_in_loop: bool,
    pub stages: Stages,
    /// `R` used for generation and planning (m).
    pub rim_perimeter: Option<f64>,
    pub constraint_report: Option<ConstraintReport>,
    pub path_nodes: Option<usize>,
    pub pre_bagging_nodes: Option<usize>,
    pub servo_outcome: Option<Outcome>,
    pub servo_steps: Option<usize>,
    /// Mean per-point error of the last observed rim to the goal state,
    /// under the best index alignment (m).
    pub final_error: Option<f64>,
    pub final_max_error: Option<f64>,
    /// Same, for the true rim.
    pub final_truth_error: Option<f64>,
    /// Distance between the true rim's centroid and the goal's (m).
    pub center_error: Option<f64>,
    /// Relative change of the true rim perimeter from start to end.
    pub perimeter_drift: Option<f64>,
    pub success_tol: f64,
    pub success: bool,
    #[serde(skip)]
    pub timing: Timing,
}

impl RunReport {
    pub fn failed_stage(&self) -> Option<Stage> {
        let s = &self.stages;
        [
            (Stage::Extraction, &s.extraction),
            (Stage::Generation, &s.generation),
            (Stage::Planning, &s.planning),
            (Stage::Servoing, &s.servoing),
        ]
        .into_iter()
        .find(|(_, st)| matches!(st, StageStatus::Failed { .. }))
        .map(|(stage, _)| stage)
    }

    pub fn failure_message(&self) -> Option<&str> {
        let s = &self.stages;
        [&s.extraction, &s.generation, &s.planning, &s.servoing]
            .into_iter()
            .find_map(|st| match st {
                StageStatus::Failed { error } => Some(error.as_str()),
                _ => None,
            })
    }

    pub fn planning_time_s(&self) -> f64 {
        self.timing.planning_s
    }
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub report: RunReport,
    pub records: Vec<LogRecord>,
}

/// The plant as the controller sees it, remembering the true rim after
/// every observation.
struct Recorded<'a> {
    sim: &'a mut BagSim,
    truth: Vec<Vec<Point3>>,
}

impl Plant for Recorded<'_> {
    fn observe(&mut self) -> Result<OrderedSoi, ServoError> {
        let x = Plant::observe(self.sim)?;
        // indexed by commands sent; a repeated look replaces the entry
        let now = self.sim.ground_truth().points;
        match self.truth.last_mut() {
            Some(last) => *last = now,
            None => self.truth.push(now),
        }
        Ok(x)
    }

    fn apply(&mut self, u: &DVector<f64>) -> Result<OrderedSoi, ServoError> {
        let x = Plant::apply(self.sim, u)?;
        self.truth.push(self.sim.ground_truth().points);
        Ok(x)
    }

    fn reset(&mut self) -> Result<OrderedSoi, ServoError> {
        self.truth.clear();
        Plant::reset(self.sim)
    }
}

fn aligned_error(rim: &[Point3], goal: &[Point3]) -> f64 {
    goal_errors(rim, goal).0
}

/// Mean and max per-point distance from `rim` to `goal` under the best
/// index alignment.
fn goal_errors(rim: &[Point3], goal: &[Point3]) -> (f64, f64) {
    let a = best_alignment(goal, rim, true);
    let g = a.apply(goal);
    (mean_point_distance(&g, rim), max_point_distance(&g, rim))
}

/// Runs extraction, bagging-state generation, planning and servoing.
///
/// Stage failures are recorded in the report and stop later stages; they
/// never surface as `Err`. `Err` is reserved for an invalid scenario or an
/// unreadable input cloud.
pub fn run_pipeline(s: &Scenario) -> Result<RunArtifacts, HarnessError> {
    run_stages(s, Stage::Servoing)
}

/// As [`run_pipeline`], stopping after `last`. Later stages stay
/// `Skipped` and the run is not counted as a success.
pub fn run_stages(s: &Scenario, last: Stage) -> Result<RunArtifacts, HarnessError> {
    s.validate()?;
    let mut records = vec![LogRecord::Scenario {
        name: s.name.clone(),
        seed: s.seed,
        perception_in_loop: s.perception_in_loop,
    }];
    let mut report = RunReport {
        scenario: s.name.clone(),
        seed: s.seed,
        perception_in_loop: s.perception_in_loop,
        stages: Stages {
            extraction: StageStatus::Skipped,
            generation: StageStatus::Skipped,
            planning: StageStatus::Skipped,
            servoing: StageStatus::Skipped,
        },
        rim_perimeter: None,
        constraint_report: None,
        path_nodes: None,
        pre_bagging_nodes: None,
        servo_outcome: None,
        servo_steps: None,
        final_error: None,
        final_max_error: None,
        final_truth_error: None,
        center_error: None,
        perimeter_drift: None,
        success_tol: s.success_tol,
        success: false,
        timing: Timing::default(),
    };
    let fail = |e: &dyn std::fmt::Display| StageStatus::Failed {
        error: e.to_string(),
    };

    let grippers = s.grippers.state(&s.bag)?;
    let mut sim = BagSim::new(s.bag, grippers, s.seed)
        .map_err(|e| HarnessError::Validation(e.to_string()))?;
    if s.perception_in_loop {
        sim = sim.with_perception(s.extraction);
    }
    let truth0 = sim.ground_truth();

    // extraction
    let clock = Instant::now();
    let (cloud, truth) = match &s.initial_cloud {
        Some(path) => (read_xyz(path)?, None),
        None => (sim.capture(), Some(truth0.points.clone())),
    };
    records.push(LogRecord::Cloud {
        points: cloud.points().to_vec(),
    });
    let extracted = extract_with_model(&cloud, &s.extraction, None);
    report.timing.extraction_s = clock.elapsed().as_secs_f64();
    let g0 = match extracted {
        Ok((soi, model)) => {
            let r = s
                .generation
                .perimeter_override
                .unwrap_or_else(|| polyline_perimeter(&soi.points).unwrap_or(0.0));
            records.push(LogRecord::Extraction {
                soi: soi.points.clone(),
                truth,
                iterations: model.iterations,
                converged: model.converged,
                loglik: model.loglik_history.clone(),
                rim_perimeter: r,
            });
            report.rim_perimeter = Some(r);
            report.stages.extraction = StageStatus::Ok;
            soi
        }
        Err(e) => {
            report.stages.extraction = fail(&e);
            return Ok(RunArtifacts { report, records });
        }
    };
    if last == Stage::Extraction {
        return Ok(RunArtifacts { report, records });
    }
    let r = report.rim_perimeter.expect("set with the extraction");

    // bagging and goal states
    let clock = Instant::now();
    let vertices = s.object.world_vertices()?;
    let gen = &s.generation;
    let generated = make_bagging_soi(
        &vertices,
        &g0,
        (gen.lambda1, gen.lambda2, gen.lambda3),
        s.extraction.n_x,
        Some(r),
    )
    .and_then(|dag| generate_goal_soi(&dag, gen.lambda_d).map(|star| (dag, star)));
    report.timing.generation_s = clock.elapsed().as_secs_f64();
    let (g_dag, g_star) = match generated {
        Ok((dag, star)) => {
            records.push(LogRecord::Generation {
                vertices: vertices.vertices().to_vec(),
                frame: dag.frame,
                ellipse: dag.ellipse,
                constraint_report: dag.constraint_report,
                g_dag: dag.soi.points.clone(),
                g_star: star.points.clone(),
            });
            report.constraint_report = Some(dag.constraint_report);
            report.stages.generation = StageStatus::Ok;
            (dag.soi, star)
        }
        Err(e) => {
            report.stages.generation = fail(&e);
            return Ok(RunArtifacts { report, records });
        }
    };
    if last == Stage::Generation {
        return Ok(RunArtifacts { report, records });
    }

    // planning
    let clock = Instant::now();
    let mut planner = s.planner.clone();
    planner.rng_seed = planner.rng_seed.wrapping_add(s.seed);
    let planned = plan_full(&g0, &g_dag, &g_star, &s.obstacles, r, &planner);
    report.timing.planning_s = clock.elapsed().as_secs_f64();
    let path = match planned {
        Ok(p) => p,
        Err(e) => {
            report.stages.planning = fail(&e);
            return Ok(RunArtifacts { report, records });
        }
    };
    for (index, node) in path.nodes().enumerate() {
        records.push(LogRecord::PathNode {
            index,
            segment: if index < path.junction() {
                Segment::PreBagging
            } else {
                Segment::Bagging
            },
            points: node.soi.points.clone(),
            ellipse: node.ellipse,
        });
    }
    report.path_nodes = Some(path.len());
    report.pre_bagging_nodes = Some(path.pre_bagging.len());
    report.stages.planning = StageStatus::Ok;
    if last == Stage::Planning {
        return Ok(RunArtifacts { report, records });
    }

    // servoing
    let clock = Instant::now();
    let subgoals = path.subgoals();
    let mut plant = Recorded {
        sim: &mut sim,
        truth: Vec::new(),
    };
    let result = run_controller(&subgoals, &mut plant, &s.controller, None);
    report.timing.servoing_s = clock.elapsed().as_secs_f64();
    let log = match result {
        Ok(log) => log,
        Err(e) => {
            report.stages.servoing = fail(&e);
            return Ok(RunArtifacts { report, records });
        }
    };
    let truth = plant.truth;
    for st in &log.steps {
        records.push(LogRecord::Step {
            t: st.t,
            subgoal: st.subgoal,
            alignment: st.alignment,
            x: st.x.clone(),
            truth: truth[st.plant_step].clone(),
            u: st.u.clone(),
            max_error: st.max_error,
            mean_error: st.mean_error,
            jacobian_condition: st.jacobian_condition,
        });
    }
    let goal = subgoals.last().expect("non-empty path");
    let final_truth = truth.last().expect("observed at least once");
    report.servo_outcome = Some(log.outcome);
    report.servo_steps = Some(log.steps.len());
    let observed = &log.steps.last().expect("at least one record").x;
    let (mean, max) = goal_errors(observed, &goal.points);
    report.final_error = Some(mean);
    report.final_max_error = Some(max);
    report.final_truth_error = Some(aligned_error(final_truth, &goal.points));
    report.center_error = Some(
        (crate::geometry::centroid(final_truth) - crate::geometry::centroid(&goal.points)).norm(),
    );
    let p0 = polyline_perimeter(&truth0.points).unwrap_or(f64::NAN);
    let p1 = polyline_perimeter(final_truth).unwrap_or(f64::NAN);
    report.perimeter_drift = Some(p1 / p0 - 1.0);
    report.stages.servoing = StageStatus::Ok;
    report.success = mean < s.success_tol;
    Ok(RunArtifacts { report, records })
}

/// Writes `log.jsonl`, `report.json` and `timing.json` into `dir`.
pub fn write_outputs(dir: &Path, run: &RunArtifacts) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    write_log(&dir.join("log.jsonl"), &run.records)?;
    let report = serde_json::to_string_pretty(&run.report).expect("report serializes");
    let path = dir.join("report.json");
    std::fs::write(&path, report + "\n").map_err(|e| HarnessError::io(&path, e))?;
    let timing = serde_json::to_string_pretty(&run.report.timing).expect("timing serializes");
    let path = dir.join("timing.json");
    std::fs::write(&path, timing + "\n").map_err(|e| HarnessError::io(&path, e))
}

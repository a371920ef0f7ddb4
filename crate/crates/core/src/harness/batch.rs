use std::fmt;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pipeline::{run_pipeline, RunReport, StageStatus};
use super::scenario::{load_scenario, Scenario};
use super::HarnessError;

/// Half-width of the random xy offset applied to the object (m).
pub const PLACEMENT_OFFSET: f64 = 0.03;

/// Random object placement for one trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub seed: u64,
    pub yaw: f64,
    pub dx: f64,
    pub dy: f64,
}

impl Placement {
    /// Trial `trial` of a scenario whose own seed is `base`.
    pub fn draw(base: u64, trial: usize) -> Self {
        let seed = base.wrapping_add(trial as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            seed,
            yaw: rng.random_range(0.0..std::f64::consts::TAU),
            dx: rng.random_range(-PLACEMENT_OFFSET..=PLACEMENT_OFFSET),
            dy: rng.random_range(-PLACEMENT_OFFSET..=PLACEMENT_OFFSET),
        }
    }

    pub fn apply(&self, s: &Scenario) -> Scenario {
        let mut out = s.clone();
        out.seed = self.seed;
        out.object.yaw += self.yaw;
        out.object.position[0] += self.dx;
        out.object.position[1] += self.dy;
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRow {
    pub scenario: String,
    pub file: PathBuf,
    pub trials: usize,
    pub planning_successes: usize,
    /// Over the trials that reached planning (s).
    pub planning_time_mean: f64,
    pub planning_time_std: f64,
    pub manipulation_successes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub rows: Vec<BatchRow>,
    #[serde(skip)]
    pub reports: Vec<Vec<RunReport>>,
}

impl fmt::Display for BatchSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<24} {:>7} {:>9} {:>18} {:>13}",
            "scenario", "trials", "planned", "plan time (s)", "manipulated"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<24} {:>7} {:>9} {:>9.3} ± {:<6.3} {:>13}",
                r.scenario,
                r.trials,
                r.planning_successes,
                r.planning_time_mean,
                r.planning_time_std,
                r.manipulation_successes
            )?;
        }
        Ok(())
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Scenario files (`*.toml`) directly inside `dir`, sorted by name.
pub fn scenario_files(dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let entries = std::fs::read_dir(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| HarnessError::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|x| x == "toml") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn summarize(file: PathBuf, name: String, reports: &[RunReport]) -> BatchRow {
    let times: Vec<f64> = reports
        .iter()
        .filter(|r| !matches!(r.stages.planning, StageStatus::Skipped))
        .map(|r| r.planning_time_s())
        .collect();
    let (planning_time_mean, planning_time_std) = mean_std(&times);
    BatchRow {
        scenario: name,
        file,
        trials: reports.len(),
        planning_successes: reports.iter().filter(|r| r.stages.planning.is_ok()).count(),
        planning_time_mean,
        planning_time_std,
        manipulation_successes: reports.iter().filter(|r| r.success).count(),
    }
}

/// Runs every scenario in `dir` `trials` times with random placements.
///
/// Trials run in parallel; each is seeded from its scenario seed and trial
/// index so results do not depend on scheduling.
pub fn run_batch(dir: &Path, trials: usize) -> Result<BatchSummary, HarnessError> {
    if trials == 0 {
        return Err(HarnessError::Validation("trials must be at least 1".into()));
    }
    let files = scenario_files(dir)?;
    if files.is_empty() {
        return Err(HarnessError::Validation(format!(
            "no scenario files in {}",
            dir.display()
        )));
    }
    let scenarios = files
        .iter()
        .map(|f| load_scenario(f))
        .collect::<Result<Vec<_>, _>>()?;
    let jobs: Vec<(usize, Scenario)> = scenarios
        .iter()
        .enumerate()
        .flat_map(|(i, s)| (0..trials).map(move |t| (i, Placement::draw(s.seed, t).apply(s))))
        .collect();
    let results = jobs
        .into_par_iter()
        .map(|(i, s)| run_pipeline(&s).map(|run| (i, run.report)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut reports: Vec<Vec<RunReport>> = vec![Vec::new(); scenarios.len()];
    for (i, r) in results {
        reports[i].push(r);
    }
    let rows = files
        .into_iter()
        .zip(&scenarios)
        .zip(&reports)
        .map(|((f, s), r)| summarize(f, s.name.clone(), r))
        .collect();
    Ok(BatchSummary { rows, reports })
}

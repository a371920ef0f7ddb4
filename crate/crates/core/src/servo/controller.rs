use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{broyden_update, mpc_step, MpcConfig, Plant, ServoError, COMMAND_DIM};
use crate::geometry::Point3;
use crate::soi::{best_alignment, Alignment, OrderedSoi};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConfig {
    pub mpc: MpcConfig,
    pub step_budget: usize,
    /// Largest per-point error accepted at the final subgoal (m).
    pub goal_tol: f64,
    /// Steps without `min_progress` improvement before giving up.
    pub stall_window: usize,
    pub min_progress: f64,
    /// Probe sizes for the finite-difference start of the Jacobian.
    pub probe_translation: f64,
    pub probe_rotation: f64,
    /// Broyden updates on/off (off keeps the starting Jacobian).
    pub adapt_jacobian: bool,
    /// Allow reversed index order when matching a subgoal to the rim.
    pub allow_reversal: bool,
    /// Fresh finite-difference Jacobians allowed when progress stalls.
    pub reprobe_limit: usize,
    /// Broyden updates are skipped when the predicted RMS motion per point
    /// is below this (m), so observation noise does not swamp them.
    pub update_min_motion: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            mpc: MpcConfig::default(),
            step_budget: 2000,
            goal_tol: 2e-3,
            stall_window: 150,
            min_progress: 1e-4,
            probe_translation: 5e-3,
            probe_rotation: 2f64.to_radians(),
            adapt_jacobian: true,
            allow_reversal: true,
            update_min_motion: 1e-3,
            reprobe_limit: 3,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<(), ServoError> {
        self.mpc.validate()?;
        let bad = |m: &str| Err(ServoError::InvalidConfig(m.into()));
        if self.step_budget == 0 || self.stall_window == 0 {
            return bad("step_budget and stall_window must be at least 1");
        }
        if !(self.goal_tol > 0.0) {
            return bad("goal_tol must be positive");
        }
        if !(self.probe_translation > 0.0 && self.probe_rotation > 0.0) {
            return bad("probe sizes must be positive");
        }
        if !(self.min_progress >= 0.0 && self.update_min_motion >= 0.0) {
            return bad("min_progress and update_min_motion must be non-negative");
        }
        Ok(())
    }
}

/// One control step: the state seen, the command sent (none on the final
/// record) and the error to the active subgoal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: u64,
    /// Commands sent to the plant before this observation, probes included.
    pub plant_step: usize,
    pub subgoal: usize,
    pub alignment: Alignment,
    pub x: Vec<Point3>,
    pub u: Option<Vec<f64>>,
    pub max_error: f64,
    pub mean_error: f64,
    /// `σ_max/σ_min` of the Jacobian estimate; absent when singular.
    pub jacobian_condition: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// Every point within `goal_tol` of the final subgoal.
    ReachedGoal,
    /// Stopped improving at the final subgoal with the mean per-point error
    /// inside the switch tolerance but the max error above `goal_tol`.
    Settled,
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlLog {
    pub outcome: Outcome,
    pub steps: Vec<StepRecord>,
    /// Plant commands spent on Jacobian probes.
    pub probe_steps: usize,
    pub reprobes: usize,
    pub subgoals_reached: usize,
    pub final_max_error: f64,
    pub final_mean_error: f64,
}

fn errors(x: &[Point3], g: &[Point3]) -> (f64, f64) {
    let mut max: f64 = 0.0;
    let mut sum = 0.0;
    for (p, q) in x.iter().zip(g) {
        let d = (p - q).norm();
        max = max.max(d);
        sum += d;
    }
    (max, sum / x.len().max(1) as f64)
}

fn condition(j: &DMatrix<f64>) -> Option<f64> {
    let sv = j.singular_values();
    let (lo, hi) = (sv.min(), sv.max());
    (lo > 0.0 && (hi / lo).is_finite()).then_some(hi / lo)
}

/// Finite-difference Jacobian from one forward probe and one return move
/// per command axis. Returns the estimate and the last observation.
pub fn bootstrap_jacobian<P: Plant>(
    plant: &mut P,
    probe_translation: f64,
    probe_rotation: f64,
) -> Result<(DMatrix<f64>, OrderedSoi), ServoError> {
    let mut x = plant.observe()?;
    let m = 3 * x.len();
    let mut j = DMatrix::zeros(m, COMMAND_DIM);
    for k in 0..COMMAND_DIM {
        let h = if (k / 3) % 2 == 0 {
            probe_translation
        } else {
            probe_rotation
        };
        let mut u = DVector::zeros(COMMAND_DIM);
        u[k] = h;
        let moved = plant.apply(&u)?;
        j.set_column(k, &((moved.to_vector() - x.to_vector()) / h));
        u[k] = -h;
        x = plant.apply(&u)?;
    }
    Ok((j, x))
}

/// Drives `plant` through `subgoals` in order.
///
/// Each subgoal is matched to the rim's index order when it becomes active
/// and that match is kept until the next switch. Without `initial_jacobian`
/// the estimate starts from [`bootstrap_jacobian`]. A subgoal is also left
/// when progress stalls with the mean per-point error inside the switch
/// tolerance. Otherwise a stall triggers a fresh [`bootstrap_jacobian`] from
/// the current state, up to `reprobe_limit` times, before giving up.
pub fn run_controller<P: Plant>(
    subgoals: &[OrderedSoi],
    plant: &mut P,
    cfg: &ControllerConfig,
    initial_jacobian: Option<DMatrix<f64>>,
) -> Result<ControlLog, ServoError> {
    cfg.validate()?;
    if subgoals.is_empty() {
        return Err(ServoError::InvalidConfig("no subgoals".into()));
    }
    let (mut j, mut x, mut probe_steps) = match initial_jacobian {
        Some(j) => (j, plant.observe()?, 0),
        None => {
            let (j, x) = bootstrap_jacobian(plant, cfg.probe_translation, cfg.probe_rotation)?;
            (j, x, 2 * COMMAND_DIM)
        }
    };
    let n = x.len();
    if subgoals.iter().any(|g| g.len() != n) || j.nrows() != 3 * n {
        return Err(ServoError::DimensionMismatch(
            "subgoals, rim and Jacobian disagree on the point count".into(),
        ));
    }
    let last = subgoals.len() - 1;
    let mut k = 0;
    let activate = |k: usize, x: &OrderedSoi| {
        let a = best_alignment(&subgoals[k].points, &x.points, cfg.allow_reversal);
        (a, a.apply(&subgoals[k].points))
    };
    let (mut alignment, mut goal) = activate(0, &x);
    let mut steps = Vec::new();
    let mut best = f64::INFINITY;
    let mut since_best = 0usize;
    let mut t = 0u64;
    let mut force_switch = false;
    let mut reprobes = 0;

    let outcome = loop {
        let (mut max_e, mut mean_e) = errors(&x.points, &goal);
        while k < last && (max_e < cfg.mpc.subgoal_switch_tol || force_switch) {
            force_switch = false;
            k += 1;
            (alignment, goal) = activate(k, &x);
            (max_e, mean_e) = errors(&x.points, &goal);
            best = f64::INFINITY;
            since_best = 0;
        }
        let mut record = StepRecord {
            t,
            plant_step: t as usize + probe_steps,
            subgoal: k,
            alignment,
            x: x.points.clone(),
            u: None,
            max_error: max_e,
            mean_error: mean_e,
            jacobian_condition: condition(&j),
        };
        if k == last && max_e < cfg.goal_tol {
            steps.push(record);
            break Outcome::ReachedGoal;
        }
        if steps.len() >= cfg.step_budget {
            steps.push(record);
            break Outcome::BudgetExhausted;
        }
        if mean_e < best - cfg.min_progress {
            best = mean_e;
            since_best = 0;
        } else {
            since_best += 1;
        }
        if since_best > cfg.stall_window {
            // a noise floor just above the switch tolerance; move on
            if k < last && mean_e < cfg.mpc.subgoal_switch_tol {
                force_switch = true;
                continue;
            }
            if k == last && mean_e < cfg.mpc.subgoal_switch_tol {
                steps.push(record);
                break Outcome::Settled;
            }
            if reprobes < cfg.reprobe_limit {
                // the estimate may have drifted; measure it again here
                (j, x) = bootstrap_jacobian(plant, cfg.probe_translation, cfg.probe_rotation)?;
                probe_steps += 2 * COMMAND_DIM;
                reprobes += 1;
                best = f64::INFINITY;
                since_best = 0;
                continue;
            }
            return Err(ServoError::Stalled {
                subgoal: k,
                steps: since_best,
                error: max_e,
            });
        }

        let xv = x.to_vector();
        let gv = DVector::from_iterator(3 * n, goal.iter().flat_map(|p| p.coords.iter().copied()));
        let u = mpc_step(&xv, &gv, &j, &cfg.mpc)?;
        let next = plant.apply(&u)?;
        if next.len() != n {
            return Err(ServoError::DimensionMismatch(
                "plant changed the number of rim points".into(),
            ));
        }
        let motion = (&j * &u).norm() / (n as f64).sqrt();
        if cfg.adapt_jacobian && motion >= cfg.update_min_motion {
            let s = next.to_vector() - &xv;
            match broyden_update(&j, &s, &u, cfg.mpc.broyden_rate) {
                Ok(updated) => j = updated,
                Err(ServoError::DegenerateExcitation) => {}
                Err(e) => return Err(e),
            }
        }
        record.u = Some(u.iter().copied().collect());
        steps.push(record);
        x = next;
        t += 1;
    };

    let tail = steps.last().expect("at least one record");
    Ok(ControlLog {
        outcome,
        final_max_error: tail.max_error,
        final_mean_error: tail.mean_error,
        subgoals_reached: if outcome == Outcome::BudgetExhausted {
            k
        } else {
            k + 1
        },
        steps,
        probe_steps,
        reprobes,
    })
}

//! Receding-horizon shape servoing along a subgoal path, with the
//! deformation Jacobian estimated online.

mod broyden;
mod controller;
mod mpc;

pub use broyden::{broyden_update, U_MIN_NORM};
pub use controller::{
    bootstrap_jacobian, run_controller, ControlLog, ControllerConfig, Outcome, StepRecord,
};
pub use mpc::{build_prediction, mpc_step, predict};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::soi::OrderedSoi;

/// Command dimension: two grippers × (translation, axis-angle).
pub const COMMAND_DIM: usize = 12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ServoError {
    #[error("command too small for a secant update")]
    DegenerateExcitation,
    #[error("solver failure: {0}")]
    SolverFailure(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid controller config: {0}")]
    InvalidConfig(String),
    #[error("no progress towards subgoal {subgoal} for {steps} steps (error {error:.4} m)")]
    Stalled {
        subgoal: usize,
        steps: usize,
        error: f64,
    },
    #[error("plant error: {0}")]
    Plant(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MpcConfig {
    pub horizon: usize,
    /// `Q = q_weight·I`.
    pub q_weight: f64,
    /// `R_w = r_weight·I`.
    pub r_weight: f64,
    /// Per-component command bound, one entry per command axis.
    pub u_max: Vec<f64>,
    /// Allowed perimeter deviation of predicted states, as a fraction.
    pub perimeter_band: f64,
    /// Weight of the squared excess over the band.
    pub perimeter_weight: f64,
    /// Perimeter the band is measured against; the goal's when unset.
    pub perimeter_reference: Option<f64>,
    /// Advance to the next subgoal once every point is this close (m).
    pub subgoal_switch_tol: f64,
    pub broyden_rate: f64,
    pub polish_iterations: usize,
}

impl Default for MpcConfig {
    fn default() -> Self {
        let mut u_max = vec![5e-3; COMMAND_DIM];
        for side in 0..2 {
            for k in 3..6 {
                u_max[6 * side + k] = 0.05;
            }
        }
        Self {
            horizon: 5,
            q_weight: 1.0,
            r_weight: 10.0,
            u_max,
            perimeter_band: 0.05,
            perimeter_weight: 10.0,
            perimeter_reference: None,
            subgoal_switch_tol: 8e-3,
            broyden_rate: 0.5,
            polish_iterations: 30,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<(), ServoError> {
        let bad = |m: &str| Err(ServoError::InvalidConfig(m.into()));
        if self.horizon < 1 {
            return bad("horizon must be at least 1");
        }
        if !(self.q_weight >= 0.0) {
            return bad("q_weight must be non-negative");
        }
        if !(self.r_weight > 0.0) {
            return bad("r_weight must be positive");
        }
        if self.u_max.iter().any(|b| !(*b > 0.0)) {
            return bad("u_max entries must be positive");
        }
        if !(self.perimeter_band >= 0.0 && self.perimeter_weight >= 0.0) {
            return bad("perimeter_band and perimeter_weight must be non-negative");
        }
        if !(self.subgoal_switch_tol > 0.0) {
            return bad("subgoal_switch_tol must be positive");
        }
        if !(self.broyden_rate > 0.0 && self.broyden_rate <= 1.0) {
            return bad("broyden_rate must be in (0,1]");
        }
        Ok(())
    }
}

/// Something that moves a rim when commanded.
pub trait Plant {
    fn observe(&mut self) -> Result<OrderedSoi, ServoError>;
    fn apply(&mut self, u: &DVector<f64>) -> Result<OrderedSoi, ServoError>;
    fn reset(&mut self) -> Result<OrderedSoi, ServoError>;
}

/// `x ← x + J u`: the model the controller assumes, made exact.
#[derive(Debug, Clone)]
pub struct LinearPlant {
    pub jacobian: DMatrix<f64>,
    x0: DVector<f64>,
    x: DVector<f64>,
    step: u64,
}

impl LinearPlant {
    pub fn new(jacobian: DMatrix<f64>, start: &OrderedSoi) -> Self {
        let x0 = start.to_vector();
        assert_eq!(
            jacobian.nrows(),
            x0.len(),
            "Jacobian rows must match the rim"
        );
        Self {
            jacobian,
            x: x0.clone(),
            x0,
            step: 0,
        }
    }
}

impl Plant for LinearPlant {
    fn observe(&mut self) -> Result<OrderedSoi, ServoError> {
        Ok(OrderedSoi::from_vector(&self.x, self.step))
    }

    fn apply(&mut self, u: &DVector<f64>) -> Result<OrderedSoi, ServoError> {
        if u.len() != self.jacobian.ncols() {
            return Err(ServoError::DimensionMismatch(format!(
                "command has {} entries, plant expects {}",
                u.len(),
                self.jacobian.ncols()
            )));
        }
        self.x += &self.jacobian * u;
        self.step += 1;
        self.observe()
    }

    fn reset(&mut self) -> Result<OrderedSoi, ServoError> {
        self.x = self.x0.clone();
        self.step = 0;
        self.observe()
    }
}

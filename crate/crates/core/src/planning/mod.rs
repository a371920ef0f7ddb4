//! Collision-free subgoal paths between rim states.
//!
//! Every state on a path is an ellipse of near-constant perimeter, sampled
//! at `n_x` arc-length-uniform points. Two trees, rooted at the start and
//! goal states, grow towards random ellipses and try to meet.

mod collision;
mod regularize;
mod rrt;

pub use collision::{collision_check, Obstacle};
pub use regularize::{regularize, regularize_from, Regularized, RimBounds, N_Y};
pub use rrt::{interpolate_ellipse, plan_full, plan_segment, soi_distance};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Aabb, Ellipse3D};
use crate::soi::OrderedSoi;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    PreBagging,
    Bagging,
}

impl std::fmt::Display for Segment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Segment::PreBagging => "pre-bagging",
            Segment::Bagging => "bagging",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanningError {
    #[error("invalid planner input: {0}")]
    InvalidConfig(String),
    #[error("regularization failed: {0}")]
    RegularizationFailed(String),
    #[error("planning failed{}: {reason}", segment.map(|s| format!(" ({s} segment)")).unwrap_or_default())]
    PlanningFailed {
        segment: Option<Segment>,
        reason: String,
    },
}

impl PlanningError {
    fn tagged(self, s: Segment) -> Self {
        match self {
            PlanningError::PlanningFailed { reason, .. } => PlanningError::PlanningFailed {
                segment: Some(s),
                reason,
            },
            PlanningError::RegularizationFailed(reason) => PlanningError::PlanningFailed {
                segment: Some(s),
                reason: format!("regularization failed: {reason}"),
            },
            other => other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerConfig {
    pub max_iterations: usize,
    /// Largest per-point motion between consecutive nodes (m).
    pub step_size: f64,
    /// Trees connect once a node pair is closer than this (m).
    pub connect_epsilon: f64,
    /// Perimeter band, as a fraction of `R`.
    pub lambda4: f64,
    /// Node center to rim-point centroid bound (m).
    pub lambda5: f64,
    /// Box for random ellipse centers. Defaults to the anchors' box padded
    /// by `auto_bounds_padding`.
    pub sample_bounds: Option<Aabb>,
    pub auto_bounds_padding: f64,
    /// Share of the random normal taken from the start-goal direction.
    pub normal_bias: f64,
    /// Gaussian jitter on the random rim points before regularization (m).
    pub sample_jitter: f64,
    pub rng_seed: u64,
    /// Greedy shortcutting of the returned path.
    pub shortcut: bool,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            max_iterations: 5000,
            step_size: 0.02,
            connect_epsilon: 0.01,
            lambda4: 0.002,
            lambda5: 0.021,
            sample_bounds: None,
            auto_bounds_padding: 0.15,
            normal_bias: 0.7,
            sample_jitter: 2e-3,
            rng_seed: 0,
            shortcut: false,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), PlanningError> {
        let bad = |m: &str| Err(PlanningError::InvalidConfig(m.into()));
        if self.max_iterations == 0 {
            return bad("max_iterations must be at least 1");
        }
        if !(self.step_size > 0.0) {
            return bad("step_size must be positive");
        }
        if !(self.connect_epsilon > 0.0) {
            return bad("connect_epsilon must be positive");
        }
        if !(self.lambda4 > 0.0) {
            return bad("lambda4 must be positive");
        }
        if !(self.lambda5 >= 0.0) {
            return bad("lambda5 must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.normal_bias) {
            return bad("normal_bias must be in [0,1]");
        }
        if !(self.sample_jitter >= 0.0 && self.auto_bounds_padding >= 0.0) {
            return bad("sample_jitter and auto_bounds_padding must be non-negative");
        }
        if let Some(b) = &self.sample_bounds {
            if !(0..3).all(|i| b.min[i] <= b.max[i]) {
                return bad("sample_bounds min must not exceed max");
            }
        }
        Ok(())
    }

    pub fn bounds(&self, rim_perimeter: f64) -> RimBounds {
        RimBounds {
            perimeter: rim_perimeter,
            lambda4: self.lambda4,
            lambda5: self.lambda5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathNode {
    pub soi: OrderedSoi,
    pub ellipse: Ellipse3D,
    /// Index of the previous node in the same list.
    pub parent: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaggingPath {
    /// From the start state to the bagging state, inclusive.
    pub pre_bagging: Vec<PathNode>,
    /// From the bagging state to the goal state, inclusive; its first node is
    /// the last node of `pre_bagging`.
    pub bagging: Vec<PathNode>,
}

impl BaggingPath {
    /// Every node once, junction included a single time.
    pub fn nodes(&self) -> impl Iterator<Item = &PathNode> {
        self.pre_bagging.iter().chain(self.bagging.iter().skip(1))
    }

    pub fn len(&self) -> usize {
        self.pre_bagging.len() + self.bagging.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.pre_bagging.is_empty()
    }

    /// Index of the bagging state in [`BaggingPath::nodes`].
    pub fn junction(&self) -> usize {
        self.pre_bagging.len().saturating_sub(1)
    }

    pub fn subgoals(&self) -> Vec<OrderedSoi> {
        self.nodes().map(|n| n.soi.clone()).collect()
    }
}

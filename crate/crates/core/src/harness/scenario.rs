use std::path::{Path, PathBuf};

use nalgebra::Rotation3;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::extraction::GmmConfig;
use crate::generation::BaggingConstraintParams;
use crate::geometry::{Point3, Vec3, VertexSet};
use crate::planning::{Obstacle, PlannerConfig};
use crate::servo::ControllerConfig;
use crate::sim::{BagModelConfig, GripperState, Pose};

const PRESETS: [(&str, &str); 5] = [
    ("coffee_box", include_str!("../../presets/coffee_box.toml")),
    (
        "canned_cylinder",
        include_str!("../../presets/canned_cylinder.toml"),
    ),
    ("grapefruit", include_str!("../../presets/grapefruit.toml")),
    (
        "triangular_prism",
        include_str!("../../presets/triangular_prism.toml"),
    ),
    (
        "bound_objects",
        include_str!("../../presets/bound_objects.toml"),
    ),
];

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PresetFile {
    vertices: Vec<[f64; 3]>,
}

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

/// Bottom-face vertices of a bundled object, in its own frame (centered,
/// on the `z = 0` plane).
pub fn preset(name: &str) -> Option<Vec<Point3>> {
    let (_, text) = PRESETS.iter().find(|(n, _)| *n == name)?;
    let file: PresetFile = toml::from_str(text).expect("bundled presets parse");
    Some(file.vertices.iter().map(|v| Point3::from(*v)).collect())
}

/// The object's base: a preset or explicit vertices, placed by a yaw about
/// world z and a translation of its origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub vertices: Option<Vec<[f64; 3]>>,
    #[serde(default = "default_object_position")]
    pub position: [f64; 3],
    #[serde(default)]
    pub yaw: f64,
}

fn default_object_position() -> [f64; 3] {
    [0.1, 0.0, 0.3]
}

impl ObjectSpec {
    pub fn from_preset(name: &str) -> Self {
        Self {
            preset: Some(name.into()),
            vertices: None,
            position: default_object_position(),
            yaw: 0.0,
        }
    }

    pub fn local_vertices(&self) -> Result<Vec<Point3>, HarnessError> {
        match (&self.preset, &self.vertices) {
            (Some(name), None) => preset(name).ok_or_else(|| {
                HarnessError::Validation(format!(
                    "unknown preset {name:?} (known: {})",
                    preset_names().collect::<Vec<_>>().join(", ")
                ))
            }),
            (None, Some(v)) => Ok(v.iter().map(|p| Point3::from(*p)).collect()),
            _ => Err(HarnessError::Validation(
                "object needs exactly one of preset or vertices".into(),
            )),
        }
    }

    pub fn world_vertices(&self) -> Result<VertexSet, HarnessError> {
        let rot = Rotation3::from_axis_angle(&Vec3::z_axis(), self.yaw);
        let offset = Vec3::from(self.position);
        let pts = self
            .local_vertices()?
            .into_iter()
            .map(|p| rot * p + offset)
            .collect();
        VertexSet::new(pts).map_err(|e| HarnessError::Validation(format!("object vertices: {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseSpec {
    pub position: [f64; 3],
    /// Axis-angle vector (rad).
    #[serde(default)]
    pub rotation: [f64; 3],
}

impl PoseSpec {
    fn pose(&self) -> Pose {
        Pose {
            position: Point3::from(self.position),
            rotation: Rotation3::new(Vec3::from(self.rotation)),
        }
    }
}

/// Handle poses at the start. Without explicit poses both handles are level
/// and `separation` (default: the bag's rest separation) apart along x.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GripperSpec {
    pub center: [f64; 3],
    pub separation: Option<f64>,
    pub left: Option<PoseSpec>,
    pub right: Option<PoseSpec>,
}

impl Default for GripperSpec {
    fn default() -> Self {
        Self {
            center: [0.1, 0.0, 0.15],
            separation: None,
            left: None,
            right: None,
        }
    }
}

impl GripperSpec {
    pub fn state(&self, bag: &BagModelConfig) -> Result<GripperState, HarnessError> {
        match (&self.left, &self.right) {
            (Some(l), Some(r)) => Ok(GripperState {
                left: l.pose(),
                right: r.pose(),
            }),
            (None, None) => Ok(GripperState::symmetric(
                Point3::from(self.center),
                self.separation.unwrap_or(bag.rest_separation),
            )),
            _ => Err(HarnessError::Validation(
                "grippers need both left and right poses, or neither".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerationSpec {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    /// Goal offset along the bottom normal (m).
    pub lambda_d: f64,
    /// Used as `R` instead of the extracted rim's perimeter.
    pub perimeter_override: Option<f64>,
}

impl Default for GenerationSpec {
    fn default() -> Self {
        Self {
            lambda1: 0.912,
            lambda2: 0.007,
            lambda3: 0.9943,
            lambda_d: 0.08,
            perimeter_override: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub perception_in_loop: bool,
    /// Final mean per-point error counted as success (m).
    #[serde(default = "default_success_tol")]
    pub success_tol: f64,
    pub object: ObjectSpec,
    #[serde(default)]
    pub grippers: GripperSpec,
    #[serde(default)]
    pub bag: BagModelConfig,
    #[serde(default)]
    pub extraction: GmmConfig,
    #[serde(default)]
    pub generation: GenerationSpec,
    #[serde(default)]
    pub planner: PlannerConfig,
    #[serde(default)]
    pub controller: ControllerConfig,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    /// xyz file replacing the simulated first capture; relative paths are
    /// resolved against the scenario file.
    #[serde(default)]
    pub initial_cloud: Option<PathBuf>,
}

fn default_name() -> String {
    "scenario".into()
}

fn default_success_tol() -> f64 {
    5e-3
}

impl Scenario {
    /// Defaults around a bundled object.
    pub fn with_preset(name: &str) -> Self {
        Self {
            name: name.into(),
            seed: 0,
            perception_in_loop: false,
            success_tol: default_success_tol(),
            object: ObjectSpec::from_preset(name),
            grippers: GripperSpec::default(),
            bag: BagModelConfig::default(),
            extraction: GmmConfig::default(),
            generation: GenerationSpec::default(),
            planner: PlannerConfig::default(),
            controller: ControllerConfig::default(),
            obstacles: Vec::new(),
            initial_cloud: None,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let v = |e: &dyn std::fmt::Display| HarnessError::Validation(e.to_string());
        if !(self.success_tol > 0.0) {
            return Err(HarnessError::Validation(
                "success_tol must be positive".into(),
            ));
        }
        self.object.world_vertices()?;
        self.bag.validate().map_err(|e| v(&e))?;
        let g = self.grippers.state(&self.bag)?;
        crate::sim::bag_forward(&g, &self.bag).map_err(|e| v(&e))?;
        self.extraction.validate().map_err(|e| v(&e))?;
        if self.extraction.n_x < 3 {
            return Err(HarnessError::Validation(
                "extraction n_x must be at least 3".into(),
            ));
        }
        let gen = &self.generation;
        if let Some(r) = gen.perimeter_override {
            if !(r > 0.0) {
                return Err(HarnessError::Validation(
                    "perimeter_override must be positive".into(),
                ));
            }
        }
        let r = gen.perimeter_override.unwrap_or(self.bag.rest_perimeter);
        BaggingConstraintParams::new(gen.lambda1, gen.lambda2, gen.lambda3, r)
            .validate()
            .map_err(|e| match e {
                crate::generation::GenerationError::InvalidParams(m) => HarnessError::Validation(m),
                other => v(&other),
            })?;
        if !(gen.lambda_d >= 0.0) {
            return Err(HarnessError::Validation(
                "lambda_d must be non-negative".into(),
            ));
        }
        self.planner.validate().map_err(|e| v(&e))?;
        self.controller.validate().map_err(|e| v(&e))?;
        if self.controller.mpc.u_max.len() != crate::servo::COMMAND_DIM {
            return Err(HarnessError::Validation(format!(
                "controller.mpc.u_max needs {} entries",
                crate::servo::COMMAND_DIM
            )));
        }
        for o in &self.obstacles {
            o.validate().map_err(|e| v(&e))?;
        }
        Ok(())
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parses and validates scenario text.
pub fn parse_scenario(text: &str, source_name: &str) -> Result<Scenario, HarnessError> {
    let scenario: Scenario = toml::from_str(text).map_err(|e| HarnessError::Parse {
        source_name: source_name.to_string(),
        line: e.span().map(|s| line_of(text, s.start)).unwrap_or(0),
        message: e.message().to_string(),
    })?;
    scenario.validate()?;
    Ok(scenario)
}

pub fn load_scenario(path: &Path) -> Result<Scenario, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let mut s = parse_scenario(&text, &path.display().to_string())?;
    if let Some(c) = &s.initial_cloud {
        if c.is_relative() {
            if let Some(dir) = path.parent() {
                s.initial_cloud = Some(dir.join(c));
            }
        }
    }
    Ok(s)
}

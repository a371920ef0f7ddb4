//! Surrogate bag: a kinematic map from two handle poses to a rim of fixed
//! perimeter, and a noisy cloud emitter standing in for the camera.
//!
//! The rim is an ellipse through both handles (they sit at the ends of one
//! diameter) whose conjugate diameter is solved so the perimeter stays at
//! `R0`. Handle rotations tilt the rim plane, shear it in-plane and add
//! smooth out-of-ellipse warps that vanish at the handles.

use nalgebra::{DVector, Rotation3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extraction::{ExtractionError, GmmConfig, RimTracker};
use crate::geometry::{ellipse_perimeter, Aabb, Point3, PointCloud, Vec3};
use crate::soi::OrderedSoi;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("handle anchors coincide")]
    AnchorsCoincident,
    #[error("invalid bag model: {0}")]
    InvalidConfig(String),
    #[error("command has {0} entries, expected 12")]
    BadCommand(usize),
    #[error("perception failed: {0}")]
    Perception(#[from] ExtractionError),
}

/// Position and orientation of one handle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Point3,
    pub rotation: Rotation3<f64>,
}

impl Pose {
    pub fn at(position: Point3) -> Self {
        Self {
            position,
            rotation: Rotation3::identity(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GripperState {
    pub left: Pose,
    pub right: Pose,
}

impl GripperState {
    /// Both handles level, `separation` apart along world x around `center`.
    pub fn symmetric(center: Point3, separation: f64) -> Self {
        let h = Vec3::new(0.5 * separation, 0.0, 0.0);
        Self {
            left: Pose::at(center - h),
            right: Pose::at(center + h),
        }
    }

    /// Integrates a 12-vector `[left dp, left dω, right dp, right dω]`.
    /// Rotations compose on the left as `exp(dω)·R`.
    pub fn integrate(&mut self, u: &[f64]) {
        let step = |pose: &mut Pose, s: &[f64]| {
            pose.position += Vec3::new(s[0], s[1], s[2]);
            pose.rotation = Rotation3::new(Vec3::new(s[3], s[4], s[5])) * pose.rotation;
        };
        step(&mut self.left, &u[0..6]);
        step(&mut self.right, &u[6..12]);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BagModelConfig {
    /// Rest perimeter `R0` (m).
    pub rest_perimeter: f64,
    /// Handle separation at which the nonlinearity is zero (m).
    pub rest_separation: f64,
    /// Rim points.
    pub n_x: usize,
    /// How strongly handle rotations bend the rim, in (0, 1].
    pub stiffness: f64,
    /// Rim roll per squared chord change (rad/m²).
    pub nonlinearity_gain: f64,
    /// Cloud samples per rim point.
    pub cloud_density: usize,
    pub cloud_noise_sigma: f64,
    pub outlier_fraction: f64,
}

impl Default for BagModelConfig {
    fn default() -> Self {
        Self {
            rest_perimeter: 0.68,
            rest_separation: 0.24,
            n_x: 32,
            stiffness: 0.6,
            nonlinearity_gain: 5.0,
            cloud_density: 50,
            cloud_noise_sigma: 3e-3,
            outlier_fraction: 0.1,
        }
    }
}

impl BagModelConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.into()));
        if !(self.rest_perimeter > 0.0) {
            return bad("rest_perimeter must be positive");
        }
        if !(self.rest_separation > 0.0 && 2.0 * self.rest_separation < self.rest_perimeter) {
            return bad("rest_separation must be in (0, rest_perimeter/2)");
        }
        if self.n_x < 4 || !self.n_x.is_multiple_of(2) {
            return bad("n_x must be even and at least 4");
        }
        if !(self.stiffness > 0.0 && self.stiffness <= 1.0) {
            return bad("stiffness must be in (0,1]");
        }
        if !self.nonlinearity_gain.is_finite() {
            return bad("nonlinearity_gain must be finite");
        }
        if self.cloud_density < 1 {
            return bad("cloud_density must be at least 1");
        }
        if !(self.cloud_noise_sigma >= 0.0) {
            return bad("cloud_noise_sigma must be non-negative");
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return bad("outlier_fraction must be in [0,1)");
        }
        Ok(())
    }
}

// Thinnest rim allowed when the handles are pulled apart (h / c).
const MIN_ASPECT: f64 = 0.1;
// Warps are scaled back when they move the perimeter further than this.
const WARP_BAND: f64 = 0.04;
// Largest shear of the conjugate diameter (rad).
const MAX_SHEAR: f64 = 1.2;
// Parameter samples used to space rim points evenly in arc length.
const ARC_SAMPLES: usize = 2048;

/// Semi-axes of the ellipse `c·cos t·e1 + h·sin t·(sin ψ·e1 + cos ψ·e2)`.
fn semi_axes(c: f64, h: f64, psi: f64) -> (f64, f64) {
    let (q, r) = (h * psi.sin(), h * psi.cos());
    let tr = c * c + q * q + r * r;
    let det = (c * r).abs();
    let disc = (tr * tr - 4.0 * det * det).max(0.0).sqrt();
    (
        (0.5 * (tr + disc)).sqrt(),
        (0.5 * (tr - disc)).max(0.0).sqrt(),
    )
}

fn conjugate_perimeter(c: f64, h: f64, psi: f64) -> f64 {
    let (a, b) = semi_axes(c, h, psi);
    ellipse_perimeter(a, b).unwrap_or(4.0 * a)
}

/// Conjugate semi-diameter length `h` with perimeter `r`; the perimeter is
/// convex in `h` with zero slope at 0, so it is increasing on `h > 0`.
fn solve_conjugate(c: f64, psi: f64, r: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, r / 2.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if conjugate_perimeter(c, mid, psi) < r {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Parameters `t` of `n` points evenly spaced in arc length from `t = 0`
/// along `p(t) = c·cos t·e1 + sin t·v`.
fn arclength_params(c: f64, v: (f64, f64), n: usize) -> Vec<f64> {
    let speed = |t: f64| {
        let (x, y) = (-c * t.sin() + v.0 * t.cos(), v.1 * t.cos());
        x.hypot(y)
    };
    let dt = std::f64::consts::TAU / ARC_SAMPLES as f64;
    let mut cum = Vec::with_capacity(ARC_SAMPLES + 1);
    cum.push(0.0);
    for k in 0..ARC_SAMPLES {
        // Simpson on each cell
        let t = k as f64 * dt;
        let seg = dt / 6.0 * (speed(t) + 4.0 * speed(t + 0.5 * dt) + speed(t + dt));
        cum.push(cum[k] + seg);
    }
    let total = cum[ARC_SAMPLES];
    let mut out = Vec::with_capacity(n);
    let mut k = 0;
    for i in 0..n {
        let target = total * i as f64 / n as f64;
        while cum[k + 1] < target {
            k += 1;
        }
        let frac = (target - cum[k]) / (cum[k + 1] - cum[k]);
        out.push((k as f64 + frac) * dt);
    }
    out
}

/// Rim of the bag for the given handle poses.
///
/// The handles sit at the ends of a diameter of an ellipse. Its conjugate
/// semi-diameter is sheared in the rim plane by the mean handle rotation
/// about the rim normal and sized so the perimeter is `R0`. Index 0 is the
/// right handle, index `n_x/2` the left one; points are equally spaced in
/// arc length.
pub fn bag_forward(g: &GripperState, cfg: &BagModelConfig) -> Result<OrderedSoi, SimError> {
    let d = g.right.position - g.left.position;
    let len = d.norm();
    if len < 1e-9 {
        return Err(SimError::AnchorsCoincident);
    }
    let dh = d / len;
    let r0 = cfg.rest_perimeter;
    let mid = nalgebra::center(&g.left.position, &g.right.position);

    let n0 = Vec3::z();
    let mut n_perp = n0 - dh * dh.dot(&n0);
    if n_perp.norm() < 1e-9 {
        n_perp = Vec3::x() - dh * dh.x;
    }
    let n_perp = n_perp.normalize();
    let w_l = g.left.rotation.scaled_axis();
    let w_r = g.right.rotation.scaled_axis();
    let rest = Vec3::new(cfg.rest_separation, 0.0, 0.0);
    let roll = cfg.stiffness * 0.5 * (w_l.dot(&dh) + w_r.dot(&dh))
        + cfg.nonlinearity_gain * (d - rest).norm_squared();
    let n = Rotation3::from_axis_angle(&nalgebra::Unit::new_unchecked(dh), roll) * n_perp;
    let w = n.cross(&dh);

    let shear_in = cfg.stiffness * 0.5 * (w_l.dot(&n) + w_r.dot(&n));
    let psi = MAX_SHEAR * (shear_in / MAX_SHEAR).tanh();
    let mut c = 0.5 * len;
    let taut = conjugate_perimeter(c, MIN_ASPECT * c, psi);
    let h = if taut > r0 {
        // the rim can't reach both handles and stays at its thinnest
        c *= r0 / taut;
        MIN_ASPECT * c
    } else {
        solve_conjugate(c, psi, r0)
    };
    let v = (h * psi.sin(), h * psi.cos());
    let b = semi_axes(c, h, psi).1;

    let thetas = arclength_params(c, v, cfg.n_x);
    let base: Vec<Point3> = thetas
        .iter()
        .map(|t| mid + dh * (c * t.cos() + v.0 * t.sin()) + w * (v.1 * t.sin()))
        .collect();

    let amp = cfg.stiffness * 0.5 * b;
    let twist = 0.5 * (w_r.dot(&dh) - w_l.dot(&dh));
    let warp: Vec<Vec3> = thetas
        .iter()
        .map(|&t| {
            let (s, c) = t.sin_cos();
            // cubic lobes: neither their sum nor their difference matches
            // the roll (sin θ) or saddle (sin 2θ) shapes
            let s_r = s * (0.5 * (1.0 + c)).powi(3);
            let s_l = s * (0.5 * (1.0 - c)).powi(3);
            let saddle = twist * (2.0 * t).sin();
            let pitch = s_r * w_r.dot(&w) + s_l * w_l.dot(&w);
            let yaw = (s_r - s_l) * 0.5 * (w_r.dot(&n) - w_l.dot(&n));
            (n * (saddle + pitch) + dh * yaw) * amp
        })
        .collect();

    let build =
        |k: f64| -> Vec<Point3> { base.iter().zip(&warp).map(|(p, v)| p + v * k).collect() };
    let in_band = |pts: &[Point3]| {
        let ratio = crate::geometry::pointset::closed_length(pts)
            / crate::geometry::pointset::closed_length(&base);
        (ratio - 1.0).abs() <= WARP_BAND
    };
    let mut points = build(1.0);
    if !in_band(&points) {
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..40 {
            let m = 0.5 * (lo + hi);
            if in_band(&build(m)) {
                lo = m;
            } else {
                hi = m;
            }
        }
        points = build(lo);
    }
    Ok(OrderedSoi::new(points, 0))
}

/// Noisy cloud around the rim: `cloud_density` Gaussian samples per rim
/// point plus `⌈f·m/(1−f)⌉` uniform outliers in the padded rim box, where
/// `m` is the number of rim samples, so outliers make up the fraction `f`.
pub fn emit_cloud<R: Rng>(rim: &OrderedSoi, cfg: &BagModelConfig, rng: &mut R) -> PointCloud {
    let sigma = cfg.cloud_noise_sigma;
    let mut pts = Vec::with_capacity(rim.len() * cfg.cloud_density);
    let normal = (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("finite sigma"));
    for p in &rim.points {
        for _ in 0..cfg.cloud_density {
            let noise = match &normal {
                Some(d) => Vec3::new(rng.sample(d), rng.sample(d), rng.sample(d)),
                None => Vec3::zeros(),
            };
            pts.push(p + noise);
        }
    }
    let n_out = outlier_count(pts.len(), cfg.outlier_fraction);
    let support = Aabb::from_points(&rim.points)
        .expect("non-empty rim")
        .inflated(0.05, 0.01);
    for _ in 0..n_out {
        pts.push(Point3::new(
            rng.random_range(support.min.x..=support.max.x),
            rng.random_range(support.min.y..=support.max.y),
            rng.random_range(support.min.z..=support.max.z),
        ));
    }
    PointCloud::new(pts).expect("rim is non-empty")
}

pub fn outlier_count(rim_samples: usize, fraction: f64) -> usize {
    if fraction <= 0.0 {
        return 0;
    }
    // rounding guard so exact ratios like 0.2·1600/0.8 stay at 400
    (fraction * rim_samples as f64 / (1.0 - fraction) - 1e-9).ceil() as usize
}

/// The bag plant: owns the handle state and, optionally, a perception loop.
#[derive(Debug, Clone)]
pub struct BagSim {
    cfg: BagModelConfig,
    initial: GripperState,
    state: GripperState,
    rng: ChaCha8Rng,
    seed: u64,
    tracker: Option<RimTracker>,
    step: u64,
}

impl BagSim {
    pub fn new(cfg: BagModelConfig, initial: GripperState, seed: u64) -> Result<Self, SimError> {
        cfg.validate()?;
        bag_forward(&initial, &cfg)?;
        Ok(Self {
            cfg,
            initial,
            state: initial,
            rng: ChaCha8Rng::seed_from_u64(seed),
            seed,
            tracker: None,
            step: 0,
        })
    }

    /// Routes every observation through `emit_cloud` and rim extraction.
    pub fn with_perception(mut self, gmm: GmmConfig) -> Self {
        self.tracker = Some(RimTracker::new(gmm));
        self
    }

    pub fn config(&self) -> &BagModelConfig {
        &self.cfg
    }

    pub fn gripper(&self) -> &GripperState {
        &self.state
    }

    pub fn perception_enabled(&self) -> bool {
        self.tracker.is_some()
    }

    /// Noise-free rim of the current state.
    pub fn ground_truth(&self) -> OrderedSoi {
        let mut s = bag_forward(&self.state, &self.cfg).expect("state validated on entry");
        s.timestamp = self.step;
        s
    }

    /// A cloud of the current rim, drawn from the plant's generator.
    pub fn capture(&mut self) -> PointCloud {
        let truth = self.ground_truth();
        emit_cloud(&truth, &self.cfg, &mut self.rng)
    }

    pub fn observe(&mut self) -> Result<OrderedSoi, SimError> {
        if self.tracker.is_none() {
            return Ok(self.ground_truth());
        }
        let cloud = self.capture();
        let step = self.step;
        let tracker = self.tracker.as_mut().expect("checked above");
        let mut soi = tracker.update(&cloud)?;
        soi.timestamp = step;
        Ok(soi)
    }

    pub fn apply(&mut self, u: &DVector<f64>) -> Result<OrderedSoi, SimError> {
        if u.len() != 12 {
            return Err(SimError::BadCommand(u.len()));
        }
        let mut next = self.state;
        next.integrate(u.as_slice());
        bag_forward(&next, &self.cfg)?;
        self.state = next;
        self.step += 1;
        self.observe()
    }

    pub fn reset(&mut self) -> Result<OrderedSoi, SimError> {
        self.state = self.initial;
        self.rng = ChaCha8Rng::seed_from_u64(self.seed);
        self.step = 0;
        if let Some(t) = self.tracker.as_mut() {
            t.reset();
        }
        self.observe()
    }
}

/// Finite-difference Jacobian of `bag_forward` with respect to the 12
/// command components.
pub fn numeric_jacobian(
    g: &GripperState,
    cfg: &BagModelConfig,
    h: f64,
) -> Result<nalgebra::DMatrix<f64>, SimError> {
    let n = 3 * cfg.n_x;
    let mut j = nalgebra::DMatrix::zeros(n, 12);
    for k in 0..12 {
        let mut u = [0.0; 12];
        u[k] = h;
        let mut plus = *g;
        plus.integrate(&u);
        u[k] = -h;
        let mut minus = *g;
        minus.integrate(&u);
        let dp = bag_forward(&plus, cfg)?.to_vector() - bag_forward(&minus, cfg)?.to_vector();
        j.set_column(k, &(dp / (2.0 * h)));
    }
    Ok(j)
}

/// Default handle placement: symmetric about `center` at the rest
/// separation.
pub fn rest_state(cfg: &BagModelConfig, center: Point3) -> GripperState {
    GripperState::symmetric(center, cfg.rest_separation)
}

impl crate::servo::Plant for BagSim {
    fn observe(&mut self) -> Result<OrderedSoi, crate::servo::ServoError> {
        BagSim::observe(self).map_err(|e| crate::servo::ServoError::Plant(e.to_string()))
    }

    fn apply(&mut self, u: &DVector<f64>) -> Result<OrderedSoi, crate::servo::ServoError> {
        BagSim::apply(self, u).map_err(|e| crate::servo::ServoError::Plant(e.to_string()))
    }

    fn reset(&mut self) -> Result<OrderedSoi, crate::servo::ServoError> {
        BagSim::reset(self).map_err(|e| crate::servo::ServoError::Plant(e.to_string()))
    }
}

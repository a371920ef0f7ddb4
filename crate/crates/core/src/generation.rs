//! Bagging SOI: the ellipse of rim perimeter placed around the object
//! bottom, and the goal SOI pushed along the bottom normal.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    build_bottom_frame, convex_hull_perimeter, ellipse_perimeter, farthest_point_sampling,
    from_frame, pca_2d, polyline_perimeter, to_frame, BottomFrame, Ellipse2D, GeometryError,
    Point2, Point3, Vec2, VertexSet,
};
use crate::optim::NelderMead;
use crate::soi::{order_rim, OrderedSoi, SoiError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenerationError {
    #[error("invalid constraint parameters: {0}")]
    InvalidParams(String),
    #[error("no ellipse satisfies the constraints: {0}")]
    Infeasible(String),
    #[error("base vertices have no spread")]
    DegenerateBase,
    #[error("bottom normal is horizontal; goal offset sign undefined")]
    HorizontalNormal,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Rim(#[from] SoiError),
}

/// Samples per ellipse for the axis estimate and before downsampling.
pub const N_E: usize = 180;
/// Base isotropy (`λ_min/λ_max`) above which the parallelism constraint is
/// dropped.
pub const ISOTROPY_WAIVER: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaggingConstraintParams {
    /// Containment: every vertex has `F_e < lambda1`.
    pub lambda1: f64,
    /// Concentricity: ellipse center within this distance of the vertex
    /// centroid (m).
    pub lambda2: f64,
    /// Parallelism: `|d_e · d_v| >= lambda3`.
    pub lambda3: f64,
    /// Rim perimeter `R` (m).
    pub rim_perimeter: f64,
    /// Largest accepted `|L - R|` (m).
    #[serde(default = "default_perimeter_tol")]
    pub perimeter_tol: f64,
}

fn default_perimeter_tol() -> f64 {
    5e-3
}

impl BaggingConstraintParams {
    pub fn new(lambda1: f64, lambda2: f64, lambda3: f64, rim_perimeter: f64) -> Self {
        Self {
            lambda1,
            lambda2,
            lambda3,
            rim_perimeter,
            perimeter_tol: default_perimeter_tol(),
        }
    }

    pub fn validate(&self) -> Result<(), GenerationError> {
        let bad = |m: &str| Err(GenerationError::InvalidParams(m.into()));
        if !(self.lambda1 > 0.0 && self.lambda1 < 1.0) {
            return bad("lambda1 must be in (0,1)");
        }
        if !(self.lambda2 >= 0.0) {
            return bad("lambda2 must be non-negative");
        }
        if !(self.lambda3 > 0.0 && self.lambda3 <= 1.0) {
            return bad("lambda3 must be in (0,1]");
        }
        if !(self.rim_perimeter > 0.0) {
            return bad("rim perimeter must be positive");
        }
        if !(self.perimeter_tol > 0.0) {
            return bad("perimeter_tol must be positive");
        }
        Ok(())
    }
}

/// Achieved constraint values of an ellipse against a base.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    /// Largest `F_e` over the vertices.
    pub c1_max: f64,
    /// Center distance from the frame origin (m).
    pub c2: f64,
    /// `|d_e · d_v|`; 1 when waived.
    pub c3: f64,
    pub c3_waived: bool,
    /// Ellipse perimeter `L` (m).
    pub perimeter: f64,
    /// `L - R` (m).
    pub perimeter_error: f64,
}

impl ConstraintReport {
    pub fn satisfies(&self, p: &BaggingConstraintParams) -> bool {
        self.c1_max < p.lambda1
            && self.c2 <= p.lambda2
            && (self.c3_waived || (p.lambda3..=1.0 + 1e-12).contains(&self.c3))
            && self.perimeter_error.abs() <= p.perimeter_tol
    }
}

/// `F_e(x, y)`: below 1 inside the ellipse.
pub fn implicit_ellipse_value(e: &Ellipse2D, x: f64, y: f64) -> f64 {
    e.implicit_value(x, y)
}

/// Principal axis of `N_E` samples of the ellipse.
fn ellipse_axis(e: &Ellipse2D) -> Option<Vec2> {
    pca_2d(&e.sample(N_E)).ok().map(|p| p.axis)
}

struct Base {
    pts: Vec<Point2>,
    axis: Vec2,
    waive_c3: bool,
}

impl Base {
    fn new(vm: &[Point3]) -> Result<Self, GenerationError> {
        let pts: Vec<Point2> = vm.iter().map(|p| Point2::new(p.x, p.y)).collect();
        let pca = pca_2d(&pts).map_err(|_| GenerationError::DegenerateBase)?;
        Ok(Self {
            axis: pca.axis,
            waive_c3: pca.isotropy() > ISOTROPY_WAIVER,
            pts,
        })
    }

    fn report(&self, e: &Ellipse2D, r: f64) -> ConstraintReport {
        let c1_max = self
            .pts
            .iter()
            .map(|p| e.implicit_value(p.x, p.y))
            .fold(f64::NEG_INFINITY, f64::max);
        let c3 = if self.waive_c3 {
            1.0
        } else {
            ellipse_axis(e).map_or(0.0, |d| d.dot(&self.axis).abs())
        };
        let perimeter = e.perimeter();
        ConstraintReport {
            c1_max,
            c2: e.center().coords.norm(),
            c3,
            c3_waived: self.waive_c3,
            perimeter,
            perimeter_error: perimeter - r,
        }
    }
}

pub fn constraint_report(
    e: &Ellipse2D,
    vm: &[Point3],
    params: &BaggingConstraintParams,
) -> Result<ConstraintReport, GenerationError> {
    Ok(Base::new(vm)?.report(e, params.rim_perimeter))
}

// Safety margins keep the optimum strictly inside each bound.
const C1_MARGIN: f64 = 2e-3;
const C2_MARGIN: f64 = 2e-4;
const C3_MARGIN: f64 = 2e-4;
const PENALTY: f64 = 10.0;

fn decode(x: &[f64]) -> Option<Ellipse2D> {
    Ellipse2D::new(x[0], x[1], x[2].exp(), x[3].exp(), x[4]).ok()
}

/// Semi-axes with ratio `aspect` (≤ 1) and perimeter `r`.
fn axes_for_perimeter(aspect: f64, r: f64) -> (f64, f64) {
    let unit = ellipse_perimeter(1.0, aspect).expect("positive axes");
    (r / unit, aspect * r / unit)
}

/// Solves for the bagging ellipse in the bottom frame.
///
/// Minimizes `(L - R)²` under containment, concentricity and parallelism by
/// multi-start Nelder-Mead on an exact penalty.
pub fn compute_bagging_ellipse(
    vm: &[Point3],
    params: &BaggingConstraintParams,
) -> Result<Ellipse2D, GenerationError> {
    solve(vm, params).map(|(e, _)| e)
}

/// As [`compute_bagging_ellipse`], also returning the constraint report.
pub fn solve(
    vm: &[Point3],
    params: &BaggingConstraintParams,
) -> Result<(Ellipse2D, ConstraintReport), GenerationError> {
    params.validate()?;
    let base = Base::new(vm)?;
    let r = params.rim_perimeter;

    // The scaled ellipse sqrt(λ1)·E contains the hull, so its perimeter
    // bounds the hull's.
    let hull = convex_hull_perimeter(&base.pts);
    if hull > params.lambda1.sqrt() * (r + params.perimeter_tol) {
        return Err(GenerationError::Infeasible(format!(
            "base hull perimeter {hull:.4} m exceeds sqrt(lambda1)·R"
        )));
    }

    let l1 = params.lambda1 - C1_MARGIN;
    let l2 = (params.lambda2 - C2_MARGIN).max(0.0);
    let l3 = (params.lambda3 + C3_MARGIN).min(1.0);
    let objective = |x: &[f64]| -> f64 {
        let Some(e) = decode(x) else {
            return f64::INFINITY;
        };
        let mut viol = 0.0;
        for p in &base.pts {
            viol += (e.implicit_value(p.x, p.y) - l1).max(0.0);
        }
        viol += (e.center().coords.norm() - l2).max(0.0) / r;
        if !base.waive_c3 {
            let dot = ellipse_axis(&e).map_or(0.0, |d| d.dot(&base.axis).abs());
            viol += (l3 - dot).max(0.0);
        }
        ((e.perimeter() - r) / r).powi(2) + PENALTY * viol
    };

    let phi = base.axis.y.atan2(base.axis.x);
    let pca = pca_2d(&base.pts).expect("checked in Base::new");
    let extent_aspect = (pca.eigenvalues[1] / pca.eigenvalues[0])
        .sqrt()
        .clamp(0.2, 0.95);
    let nm = NelderMead {
        max_evals: 3000,
        xtol: 1e-9,
        ftol: 1e-16,
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    for alpha0 in [phi, phi + PI / 2.0] {
        for aspect in [extent_aspect, 0.95] {
            for jitter in [-0.03, 0.03] {
                let (a, b) = axes_for_perimeter(aspect, r);
                let mut x = vec![0.0, 0.0, a.ln(), b.ln(), alpha0 + jitter];
                let mut steps = vec![0.1 * l2.max(1e-3), 0.1 * l2.max(1e-3), 0.05, 0.05, 0.05];
                let mut f = f64::INFINITY;
                // restarts shake the simplex loose from penalty kinks
                for _ in 0..3 {
                    let m = nm.minimize(&objective, &x, &steps);
                    let done = m.f >= f - 1e-18;
                    x = m.x;
                    f = m.f;
                    steps.iter_mut().for_each(|s| *s *= 0.3);
                    if done {
                        break;
                    }
                }
                if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
                    best = Some((f, x));
                }
            }
        }
    }
    let (_, x) = best.expect("at least one seed");
    let e = decode(&x).ok_or_else(|| GenerationError::Infeasible("degenerate optimum".into()))?;
    let report = base.report(&e, r);
    if !report.satisfies(params) {
        return Err(GenerationError::Infeasible(format!(
            "best ellipse violates constraints: {report:?}"
        )));
    }
    Ok((e, report))
}

/// The bagging SOI and how it was built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaggingSoi {
    pub ellipse: Ellipse2D,
    pub frame: BottomFrame,
    pub soi: OrderedSoi,
    pub constraint_report: ConstraintReport,
}

/// Builds the bagging SOI for base `v` and a bag whose rim is `rim0`.
///
/// `perimeter_override` replaces the polyline perimeter of `rim0` as `R`.
pub fn make_bagging_soi(
    v: &VertexSet,
    rim0: &OrderedSoi,
    lambda: (f64, f64, f64),
    n_x: usize,
    perimeter_override: Option<f64>,
) -> Result<BaggingSoi, GenerationError> {
    let r = match perimeter_override {
        Some(r) => r,
        None => polyline_perimeter(&rim0.points)?,
    };
    let params = BaggingConstraintParams::new(lambda.0, lambda.1, lambda.2, r);
    let frame = build_bottom_frame(v)?;
    let vm = to_frame(v.vertices(), &frame);
    let (ellipse, constraint_report) = solve(&vm, &params)?;
    let local: Vec<Point3> = ellipse
        .sample(N_E)
        .into_iter()
        .map(|p| Point3::new(p.x, p.y, 0.0))
        .collect();
    let world = from_frame(&local, &frame);
    let picked = farthest_point_sampling(&world, n_x, 0)?;
    let soi = order_rim(&picked, rim0.timestamp)?;
    Ok(BaggingSoi {
        ellipse,
        frame,
        soi,
        constraint_report,
    })
}

/// Shifts the bagging SOI by `λ_d` along the bottom normal, signed so the
/// shift has a non-negative world-z component.
pub fn generate_goal_soi(g_dag: &BaggingSoi, lambda_d: f64) -> Result<OrderedSoi, GenerationError> {
    goal_offset(&g_dag.frame, lambda_d).map(|d| g_dag.soi.translated(&d))
}

pub fn goal_offset(
    frame: &BottomFrame,
    lambda_d: f64,
) -> Result<crate::geometry::Vec3, GenerationError> {
    if !(lambda_d >= 0.0) {
        return Err(GenerationError::InvalidParams(
            "lambda_d must be non-negative".into(),
        ));
    }
    let a_z = frame.axis_z();
    let dot = a_z.z;
    if dot.abs() < 1e-6 {
        return Err(GenerationError::HorizontalNormal);
    }
    Ok(a_z * (dot.signum() * lambda_d))
}

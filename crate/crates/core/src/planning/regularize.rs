//! Projection of a point set onto the closest valid rim ellipse.

use nalgebra::{Matrix3, Rotation3};

use super::PlanningError;
use crate::geometry::{ellipse::ramanujan2, plane_fit, Ellipse3D, Point3, Vec3};
use crate::optim::NelderMead;
use crate::soi::{best_alignment, OrderedSoi};

/// Ellipse samples used when scoring a fit by Chamfer distance.
pub const N_Y: usize = 90;

/// Perimeter band and concentricity bound applied to every node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RimBounds {
    /// Target rim perimeter `R` (m).
    pub perimeter: f64,
    pub lambda4: f64,
    pub lambda5: f64,
}

impl RimBounds {
    /// `|R/R_y - 1|` for an ellipse of perimeter `R_y`.
    pub fn perimeter_deviation(&self, e: &Ellipse3D) -> f64 {
        (self.perimeter / e.perimeter() - 1.0).abs()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Regularized {
    pub ellipse: Ellipse3D,
    /// `n_x` points at uniform arc length on `ellipse`, indexed to match the
    /// input as closely as a cyclic shift (or reversal) allows.
    pub soi: OrderedSoi,
    /// Mean squared distance from the input to the ellipse.
    pub residual: f64,
}

struct Param {
    centroid: Point3,
    frame: Rotation3<f64>,
    bounds: RimBounds,
}

impl Param {
    // x = [q(3), r(3), s, t]: center offset squashed into the λ5 ball, a
    // rotation vector on top of the seed frame, log aspect, and a perimeter
    // slack squashed into the λ4 band.
    fn ellipse(&self, x: &[f64]) -> Ellipse3D {
        let q = Vec3::new(x[0], x[1], x[2]);
        let qn = q.norm();
        let offset = if qn > 1e-300 {
            q * (self.bounds.lambda5 * qn.tanh() / qn)
        } else {
            Vec3::zeros()
        };
        let rot = Rotation3::new(Vec3::new(x[3], x[4], x[5])) * self.frame;
        let m = rot.matrix();
        let ratio = x[6].clamp(-20.0, 20.0).exp();
        let per = self.bounds.perimeter / (1.0 + self.bounds.lambda4 * x[7].tanh());
        let rho_u = per / ramanujan2(1.0, ratio);
        Ellipse3D {
            center: self.centroid + offset,
            u: m.column(0).into_owned(),
            v: m.column(1).into_owned(),
            rho_u,
            rho_v: ratio * rho_u,
        }
    }
}

/// Mean squared distance from `x` to the curve: the `x → Y` half of the
/// Chamfer distance with `Y` dense. The sampled `Y → x` half pulls the curve
/// onto the chords of `x` and shrinks it by a fraction of a millimeter.
///
/// The in-plane part uses the first-order (Sampson) distance `F/|∇F|`,
/// which agrees with the Euclidean one to second order near the curve.
fn curve_fit(e: &Ellipse3D, x: &[Point3]) -> f64 {
    let n = e.normal();
    let (ia, ib) = (1.0 / (e.rho_u * e.rho_u), 1.0 / (e.rho_v * e.rho_v));
    x.iter()
        .map(|p| {
            let d = p - e.center;
            let (a, b, z) = (d.dot(&e.u), d.dot(&e.v), d.dot(&n));
            let f = a * a * ia + b * b * ib - 1.0;
            let g2 = 4.0 * (a * a * ia * ia + b * b * ib * ib);
            f * f / g2.max(1e-300) + z * z
        })
        .sum::<f64>()
        / x.len() as f64
}

fn frame_from(u: Vec3, v: Vec3) -> Rotation3<f64> {
    let n = u.cross(&v);
    Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[u, v, n]))
}

/// Closest ellipse (mean squared point-to-curve distance) to `x` with
/// perimeter within `λ4` of `R` and center within `λ5` of the centroid of
/// `x`. Seeded from the plane fit of `x`.
pub fn regularize(x: &[Point3], bounds: &RimBounds) -> Result<Regularized, PlanningError> {
    regularize_from(x, bounds, None)
}

/// As [`regularize`], seeded from `seed` when given (its in-plane
/// orientation and aspect; the center is always the centroid of `x`).
pub fn regularize_from(
    x: &[Point3],
    bounds: &RimBounds,
    seed: Option<&Ellipse3D>,
) -> Result<Regularized, PlanningError> {
    if x.len() < 5 {
        return Err(PlanningError::RegularizationFailed(format!(
            "need at least 5 points, got {}",
            x.len()
        )));
    }
    if !(bounds.perimeter > 0.0 && bounds.lambda4 > 0.0 && bounds.lambda5 >= 0.0) {
        return Err(PlanningError::RegularizationFailed(
            "perimeter and lambda4 must be positive, lambda5 non-negative".into(),
        ));
    }
    let fit = plane_fit(x).map_err(|e| PlanningError::RegularizationFailed(e.to_string()))?;
    if !(fit.eigenvalues[1] > 1e-12 * fit.eigenvalues[0]) || fit.eigenvalues[0] <= 0.0 {
        return Err(PlanningError::RegularizationFailed(
            "points are collinear".into(),
        ));
    }
    let (frame, aspect) = match seed {
        Some(e) => (frame_from(e.u, e.v), e.rho_v / e.rho_u),
        None => (
            frame_from(fit.axes[0], fit.axes[1]),
            (fit.eigenvalues[1] / fit.eigenvalues[0]).sqrt(),
        ),
    };
    let param = Param {
        centroid: fit.centroid,
        frame,
        bounds: *bounds,
    };
    let objective = |p: &[f64]| curve_fit(&param.ellipse(p), x);

    let nm = NelderMead {
        max_evals: 3000,
        xtol: 1e-8,
        ftol: 1e-16,
    };
    let mut steps = [0.3, 0.3, 0.3, 0.1, 0.1, 0.1, 0.2, 0.5];
    let mut best = nm.minimize(
        objective,
        &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, aspect.ln(), 0.0],
        &steps,
    );
    for _ in 0..2 {
        steps.iter_mut().for_each(|s| *s *= 0.3);
        let next = nm.minimize(objective, &best.x, &steps);
        let gain = best.f - next.f;
        if next.f <= best.f {
            best = next;
        }
        if gain <= 1e-12 * best.f.max(1e-300) {
            break;
        }
    }
    if !best.f.is_finite() {
        return Err(PlanningError::RegularizationFailed(
            "objective is not finite".into(),
        ));
    }
    let raw = param.ellipse(&best.x);
    let ellipse = Ellipse3D::new(raw.center, raw.u, raw.v, raw.rho_u, raw.rho_v)
        .map_err(|e| PlanningError::RegularizationFailed(e.to_string()))?;
    let samples = ellipse.sample_arclength(x.len());
    let align = best_alignment(&samples, x, true);
    Ok(Regularized {
        ellipse,
        soi: OrderedSoi::new(align.apply(&samples), 0),
        residual: best.f,
    })
}

/// An ellipse sampled at `n` arc-length-uniform points, shaped into a node
/// without optimization. Only valid when `e` already meets the bounds.
pub(crate) fn exact_node(e: &Ellipse3D, n: usize, reference: &[Point3]) -> OrderedSoi {
    let samples = e.sample_arclength(n);
    let align = best_alignment(&samples, reference, true);
    OrderedSoi::new(align.apply(&samples), 0)
}

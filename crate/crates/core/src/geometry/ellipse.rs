use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use super::{GeometryError, Point2, Point3, Vec2, Vec3};

/// Perimeter of an ellipse with semi-axes `rho_a`, `rho_b` (Ramanujan's
/// second approximation).
pub fn ellipse_perimeter(rho_a: f64, rho_b: f64) -> Result<f64, GeometryError> {
    if !(rho_a > 0.0 && rho_b > 0.0) {
        return Err(GeometryError::NonPositiveAxis(rho_a, rho_b));
    }
    Ok(ramanujan2(rho_a, rho_b))
}

pub(crate) fn ramanujan2(a: f64, b: f64) -> f64 {
    let s = a + b;
    let h = ((a - b) / s).powi(2);
    PI * s * (1.0 + 3.0 * h / (10.0 + (4.0 - 3.0 * h).sqrt()))
}

/// Ellipse in the xy-plane of a bottom frame.
///
/// `alpha` is the direction of the semi-major axis `rho_a`, kept in `[0, π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse2D {
    pub tau_x: f64,
    pub tau_y: f64,
    pub rho_a: f64,
    pub rho_b: f64,
    pub alpha: f64,
}

impl Ellipse2D {
    /// Builds a normalized ellipse: axes are swapped (and `alpha` turned by
    /// a quarter) when `rho_b > rho_a`.
    pub fn new(
        tau_x: f64,
        tau_y: f64,
        rho_a: f64,
        rho_b: f64,
        alpha: f64,
    ) -> Result<Self, GeometryError> {
        if !(rho_a > 0.0 && rho_b > 0.0) {
            return Err(GeometryError::NonPositiveAxis(rho_a, rho_b));
        }
        let (rho_a, rho_b, alpha) = if rho_b > rho_a {
            (rho_b, rho_a, alpha + PI / 2.0)
        } else {
            (rho_a, rho_b, alpha)
        };
        Ok(Self {
            tau_x,
            tau_y,
            rho_a,
            rho_b,
            alpha: alpha.rem_euclid(PI),
        })
    }

    pub fn center(&self) -> Point2 {
        Point2::new(self.tau_x, self.tau_y)
    }

    pub fn point_at(&self, theta: f64) -> Point2 {
        let (sa, ca) = self.alpha.sin_cos();
        let (st, ct) = theta.sin_cos();
        Point2::new(
            self.tau_x + self.rho_a * ct * ca - self.rho_b * st * sa,
            self.tau_y + self.rho_a * ct * sa + self.rho_b * st * ca,
        )
    }

    /// `n` points at `θ_i = 2πi/n`.
    pub fn sample(&self, n: usize) -> Vec<Point2> {
        (0..n)
            .map(|i| self.point_at(TAU * i as f64 / n as f64))
            .collect()
    }

    /// Quadratic form: `< 1` inside, `1` on the boundary, `> 1` outside.
    pub fn implicit_value(&self, x: f64, y: f64) -> f64 {
        let (sa, ca) = self.alpha.sin_cos();
        let dx = x - self.tau_x;
        let dy = y - self.tau_y;
        let along = dx * ca + dy * sa;
        let across = -dx * sa + dy * ca;
        (along / self.rho_a).powi(2) + (across / self.rho_b).powi(2)
    }

    pub fn perimeter(&self) -> f64 {
        ramanujan2(self.rho_a, self.rho_b)
    }

    pub fn major_axis(&self) -> Vec2 {
        Vec2::new(self.alpha.cos(), self.alpha.sin())
    }
}

/// Planar ellipse embedded in 3D: `c + ρ_u cos θ u + ρ_v sin θ v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse3D {
    pub center: Point3,
    pub u: Vec3,
    pub v: Vec3,
    pub rho_u: f64,
    pub rho_v: f64,
}

const AXIS_TOL: f64 = 1e-9;

impl Ellipse3D {
    /// Validates orthonormal axes and orders the radii so `rho_u >= rho_v`.
    /// A swap maps `(u, v)` to `(v, -u)`, which keeps the normal `u × v`.
    pub fn new(
        center: Point3,
        u: Vec3,
        v: Vec3,
        rho_u: f64,
        rho_v: f64,
    ) -> Result<Self, GeometryError> {
        if !(rho_u > 0.0 && rho_v > 0.0) {
            return Err(GeometryError::NonPositiveAxis(rho_u, rho_v));
        }
        if (u.norm() - 1.0).abs() > AXIS_TOL
            || (v.norm() - 1.0).abs() > AXIS_TOL
            || u.dot(&v).abs() > AXIS_TOL
        {
            return Err(GeometryError::NonOrthonormalAxes);
        }
        Ok(if rho_v > rho_u {
            Self {
                center,
                u: v,
                v: -u,
                rho_u: rho_v,
                rho_v: rho_u,
            }
        } else {
            Self {
                center,
                u,
                v,
                rho_u,
                rho_v,
            }
        })
    }

    pub fn normal(&self) -> Vec3 {
        self.u.cross(&self.v)
    }

    pub fn point_at(&self, theta: f64) -> Point3 {
        let (s, c) = theta.sin_cos();
        self.center + self.u * (self.rho_u * c) + self.v * (self.rho_v * s)
    }

    pub fn perimeter(&self) -> f64 {
        ramanujan2(self.rho_u, self.rho_v)
    }

    /// `n` points at uniform parameter steps `θ_i = 2πi/n`.
    pub fn sample(&self, n: usize) -> Vec<Point3> {
        (0..n)
            .map(|i| self.point_at(TAU * i as f64 / n as f64))
            .collect()
    }

    /// `n` points at uniform arc length, starting at the `+u` vertex and
    /// running towards `+v`.
    ///
    /// With `n` a multiple of four the point set does not depend on which
    /// axis vertex it starts from, so it is a function of the ellipse alone.
    pub fn sample_arclength(&self, n: usize) -> Vec<Point3> {
        arclength_angles(self.rho_u, self.rho_v, n)
            .into_iter()
            .map(|t| self.point_at(t))
            .collect()
    }

    /// Euclidean distance from `p` to the ellipse curve.
    pub fn distance_to(&self, p: &Point3) -> f64 {
        let d = p - self.center;
        let x = d.dot(&self.u);
        let y = d.dot(&self.v);
        let z = d.dot(&self.normal());
        let in_plane = point_ellipse_distance(self.rho_u, self.rho_v, x.abs(), y.abs());
        (in_plane * in_plane + z * z).sqrt()
    }
}

/// Uniform points on an ellipse. Fails when fewer than three are requested.
pub fn sample_ellipse3d(e: &Ellipse3D, n: usize) -> Result<Vec<Point3>, GeometryError> {
    if n < 3 {
        return Err(GeometryError::TooFewPoints { needed: 3, got: n });
    }
    Ok(e.sample(n))
}

// 5-point Gauss-Legendre on [-1, 1].
const GL_X: [f64; 5] = [
    0.0,
    -0.538_469_310_105_683_1,
    0.538_469_310_105_683_1,
    -0.906_179_845_938_664,
    0.906_179_845_938_664,
];
const GL_W: [f64; 5] = [
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
    0.236_926_885_056_189_1,
];
const ARC_PANELS: usize = 64;

fn speed(a: f64, b: f64, t: f64) -> f64 {
    let (s, c) = t.sin_cos();
    (a * a * s * s + b * b * c * c).sqrt()
}

fn gl_integral(a: f64, b: f64, t0: f64, t1: f64) -> f64 {
    let half = 0.5 * (t1 - t0);
    let mid = 0.5 * (t1 + t0);
    GL_X.iter()
        .zip(GL_W.iter())
        .map(|(x, w)| w * speed(a, b, mid + half * x))
        .sum::<f64>()
        * half
}

/// Parameter values `θ_k` splitting the ellipse into `n` arcs of equal length.
pub(crate) fn arclength_angles(a: f64, b: f64, n: usize) -> Vec<f64> {
    let h = TAU / ARC_PANELS as f64;
    let mut cum = Vec::with_capacity(ARC_PANELS + 1);
    cum.push(0.0);
    for k in 0..ARC_PANELS {
        let prev = cum[k];
        cum.push(prev + gl_integral(a, b, k as f64 * h, (k + 1) as f64 * h));
    }
    let total = cum[ARC_PANELS];
    (0..n)
        .map(|i| {
            let target = total * i as f64 / n as f64;
            if i == 0 {
                return 0.0;
            }
            let k = cum.partition_point(|&s| s <= target).clamp(1, ARC_PANELS) - 1;
            let t0 = k as f64 * h;
            let frac = (target - cum[k]) / (cum[k + 1] - cum[k]);
            let mut t = t0 + frac * h;
            for _ in 0..20 {
                let s = cum[k] + gl_integral(a, b, t0, t);
                let step = (s - target) / speed(a, b, t).max(1e-300);
                t -= step;
                if step.abs() < 1e-15 {
                    break;
                }
            }
            t
        })
        .collect()
}

/// Distance from `(y0, y1)` (first quadrant) to the ellipse with semi-axes
/// `e0`, `e1` centered at the origin. Robust bisection on the Lagrange root.
fn point_ellipse_distance(e0: f64, e1: f64, y0: f64, y1: f64) -> f64 {
    if e0 < e1 {
        return point_ellipse_distance(e1, e0, y1, y0);
    }
    if y1 > 0.0 {
        if y0 > 0.0 {
            let z0 = y0 / e0;
            let z1 = y1 / e1;
            let g = z0 * z0 + z1 * z1 - 1.0;
            if g == 0.0 {
                return 0.0;
            }
            let r0 = (e0 / e1).powi(2);
            let sbar = lagrange_root(r0, z0, z1, g);
            let x0 = r0 * y0 / (sbar + r0);
            let x1 = y1 / (sbar + 1.0);
            ((x0 - y0).powi(2) + (x1 - y1).powi(2)).sqrt()
        } else {
            (y1 - e1).abs()
        }
    } else {
        let numer0 = e0 * y0;
        let denom0 = e0 * e0 - e1 * e1;
        if numer0 < denom0 {
            let xde0 = numer0 / denom0;
            let x0 = e0 * xde0;
            let x1 = e1 * (1.0 - xde0 * xde0).max(0.0).sqrt();
            ((x0 - y0).powi(2) + x1 * x1).sqrt()
        } else {
            (y0 - e0).abs()
        }
    }
}

fn lagrange_root(r0: f64, z0: f64, z1: f64, g: f64) -> f64 {
    let n0 = r0 * z0;
    let mut s0 = z1 - 1.0;
    let mut s1 = if g < 0.0 { 0.0 } else { n0.hypot(z1) - 1.0 };
    let mut s = 0.0;
    for _ in 0..200 {
        s = 0.5 * (s0 + s1);
        if s == s0 || s == s1 {
            break;
        }
        let ratio0 = n0 / (s + r0);
        let ratio1 = z1 / (s + 1.0);
        let g = ratio0 * ratio0 + ratio1 * ratio1 - 1.0;
        if g > 0.0 {
            s0 = s;
        } else if g < 0.0 {
            s1 = s;
        } else {
            break;
        }
    }
    s
}

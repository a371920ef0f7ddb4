use serde::{Deserialize, Serialize};

use super::PlanningError;
use crate::geometry::{Point3, Vec3};

/// Axis-aligned cuboid in the world frame, padded by `margin` on every side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Obstacle {
    pub min: Point3,
    pub max: Point3,
    #[serde(default)]
    pub margin: f64,
}

impl Obstacle {
    pub fn new(min: Point3, max: Point3, margin: f64) -> Result<Self, PlanningError> {
        let o = Self { min, max, margin };
        o.validate()?;
        Ok(o)
    }

    pub fn validate(&self) -> Result<(), PlanningError> {
        if !(0..3).all(|i| self.min[i] < self.max[i]) {
            return Err(PlanningError::InvalidConfig(
                "obstacle min must be below max on every axis".into(),
            ));
        }
        if !(self.margin >= 0.0) {
            return Err(PlanningError::InvalidConfig(
                "obstacle margin must be non-negative".into(),
            ));
        }
        Ok(())
    }

    fn lo(&self) -> Point3 {
        self.min - Vec3::repeat(self.margin)
    }

    fn hi(&self) -> Point3 {
        self.max + Vec3::repeat(self.margin)
    }

    pub fn contains(&self, p: &Point3) -> bool {
        let (lo, hi) = (self.lo(), self.hi());
        (0..3).all(|i| p[i] >= lo[i] && p[i] <= hi[i])
    }

    /// Slab test of the closed segment from `a` to `b` against the padded box.
    pub fn intersects_segment(&self, a: &Point3, b: &Point3) -> bool {
        let (lo, hi) = (self.lo(), self.hi());
        let d = b - a;
        let (mut t0, mut t1) = (0.0f64, 1.0f64);
        for i in 0..3 {
            if d[i].abs() < 1e-300 {
                if a[i] < lo[i] || a[i] > hi[i] {
                    return false;
                }
                continue;
            }
            let inv = 1.0 / d[i];
            let (mut ta, mut tb) = ((lo[i] - a[i]) * inv, (hi[i] - a[i]) * inv);
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
            if t0 > t1 {
                return false;
            }
        }
        true
    }
}

/// `true` when a rim point or a chord between consecutive rim points
/// (including the closing one) touches any padded obstacle.
pub fn collision_check(points: &[Point3], obstacles: &[Obstacle]) -> bool {
    let n = points.len();
    obstacles
        .iter()
        .any(|o| (0..n).any(|i| o.intersects_segment(&points[i], &points[(i + 1) % n])))
}

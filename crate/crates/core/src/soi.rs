//! The ordered rim state and the index bookkeeping that keeps consecutive
//! states in correspondence.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{plane_fit, Point3, Vec3};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SoiError {
    #[error("rim points are collinear or coincident")]
    DegenerateRim,
    #[error("need at least {needed} rim points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
}

/// `n_x` rim points in cyclic order at step `timestamp`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderedSoi {
    pub points: Vec<Point3>,
    pub timestamp: u64,
}

impl OrderedSoi {
    pub fn new(points: Vec<Point3>, timestamp: u64) -> Self {
        Self { points, timestamp }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Point3 {
        crate::geometry::centroid(&self.points)
    }

    /// Every point shifted by `d`.
    pub fn translated(&self, d: &Vec3) -> Self {
        Self {
            points: self.points.iter().map(|p| p + d).collect(),
            timestamp: self.timestamp,
        }
    }

    /// Stacked coordinates `[x0, y0, z0, x1, ...]`.
    pub fn to_vector(&self) -> nalgebra::DVector<f64> {
        nalgebra::DVector::from_iterator(
            3 * self.points.len(),
            self.points.iter().flat_map(|p| p.coords.iter().copied()),
        )
    }

    pub fn from_vector(v: &nalgebra::DVector<f64>, timestamp: u64) -> Self {
        let points = v
            .as_slice()
            .chunks_exact(3)
            .map(|c| Point3::new(c[0], c[1], c[2]))
            .collect();
        Self { points, timestamp }
    }
}

/// A cyclic re-indexing: position `i` maps to source index
/// `shift + i` (or `shift - i` when `reversed`), modulo `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    pub shift: usize,
    pub reversed: bool,
}

impl Alignment {
    pub const IDENTITY: Self = Self {
        shift: 0,
        reversed: false,
    };

    pub fn source_index(&self, i: usize, n: usize) -> usize {
        if self.reversed {
            (self.shift + n - i % n) % n
        } else {
            (self.shift + i) % n
        }
    }

    pub fn apply(&self, points: &[Point3]) -> Vec<Point3> {
        let n = points.len();
        (0..n).map(|i| points[self.source_index(i, n)]).collect()
    }
}

/// Alignment of `points` minimizing the summed squared distance to
/// `reference`. Both sets must have the same length.
pub fn best_alignment(points: &[Point3], reference: &[Point3], allow_reversal: bool) -> Alignment {
    let n = points.len();
    assert_eq!(n, reference.len(), "alignment needs equal-length rims");
    let mut best = (f64::INFINITY, Alignment::IDENTITY);
    let directions: &[bool] = if allow_reversal {
        &[false, true]
    } else {
        &[false]
    };
    for &reversed in directions {
        for shift in 0..n {
            let a = Alignment { shift, reversed };
            let mut cost = 0.0;
            for (i, r) in reference.iter().enumerate() {
                cost += (points[a.source_index(i, n)] - r).norm_squared();
                if cost >= best.0 {
                    break;
                }
            }
            if cost < best.0 {
                best = (cost, a);
            }
        }
    }
    best.1
}

/// Largest per-point distance between two equally indexed rims.
pub fn max_point_distance(a: &[Point3], b: &[Point3]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q).norm())
        .fold(0.0, f64::max)
}

pub fn mean_point_distance(a: &[Point3], b: &[Point3]) -> f64 {
    let n = a.len().min(b.len()).max(1) as f64;
    a.iter().zip(b).map(|(p, q)| (p - q).norm()).sum::<f64>() / n
}

/// Orders unordered rim points counter-clockwise in their best-fit plane.
///
/// The plane normal is taken with positive world z, the sort is by polar
/// angle about the centroid, and the sequence starts at the point with the
/// largest world x.
pub fn order_rim(means: &[Point3], timestamp: u64) -> Result<OrderedSoi, SoiError> {
    if means.len() < 3 {
        return Err(SoiError::TooFewPoints {
            needed: 3,
            got: means.len(),
        });
    }
    let fit = plane_fit(means).map_err(|_| SoiError::DegenerateRim)?;
    if fit.eigenvalues[1] <= 1e-12 * fit.eigenvalues[0] {
        return Err(SoiError::DegenerateRim);
    }
    let mut normal = fit.normal();
    let lead = if normal.z.abs() > 1e-12 {
        normal.z
    } else if normal.x.abs() > 1e-12 {
        normal.x
    } else {
        normal.y
    };
    if lead < 0.0 {
        normal = -normal;
    }
    let e1 = fit.axes[0];
    let e2 = normal.cross(&e1);
    let mut keyed: Vec<(f64, Point3)> = means
        .iter()
        .map(|p| {
            let d = p - fit.centroid;
            (d.dot(&e2).atan2(d.dot(&e1)).rem_euclid(TAU), *p)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
    let start = keyed
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .1.x.total_cmp(&b.1 .1.x).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i)
        .unwrap_or(0);
    keyed.rotate_left(start);
    Ok(OrderedSoi::new(
        keyed.into_iter().map(|(_, p)| p).collect(),
        timestamp,
    ))
}

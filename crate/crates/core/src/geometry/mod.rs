//! Shared geometric primitives: points, clouds, frames, ellipses and point-set
//! operators (PCA, farthest point sampling, Chamfer distance).
//!
//! Everything in here is a pure function over immutable inputs.

pub(crate) mod ellipse;
mod frame;
pub(crate) mod pointset;

pub use ellipse::{ellipse_perimeter, sample_ellipse3d, Ellipse2D, Ellipse3D};
pub use frame::{build_bottom_frame, from_frame, to_frame, BottomFrame};
pub use pointset::{
    chamfer_distance, convex_hull_perimeter, farthest_point_sampling,
    farthest_point_sampling_indices, minimal_enclosing_circle, pca_2d, pca_principal_axis,
    plane_fit, polyline_perimeter, Pca2, PlaneFit,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A point in meters. World frame unless stated otherwise.
pub type Point3 = nalgebra::Point3<f64>;
pub type Vec3 = nalgebra::Vector3<f64>;
pub type Point2 = nalgebra::Point2<f64>;
pub type Vec2 = nalgebra::Vector2<f64>;

/// Maximum out-of-plane residual accepted for a vertex set (meters).
pub const COPLANARITY_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("degenerate vertices: every vertex triple is collinear")]
    DegenerateVertices,
    #[error("vertices are not coplanar (max residual {residual:.3e} m)")]
    NonCoplanar { residual: f64 },
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("ellipse axes must be positive (got {0}, {1})")]
    NonPositiveAxis(f64, f64),
    #[error("ellipse axes must be orthonormal")]
    NonOrthonormalAxes,
    #[error("point spread is numerically zero")]
    DegenerateSpread,
    #[error("cannot select {k} points from a set of {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("point set is empty")]
    EmptySet,
    #[error("start index {start} out of range for {n} points")]
    StartOutOfRange { start: usize, n: usize },
}

/// A raw point cloud. Non-finite entries are dropped on construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    points: Vec<Point3>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Result<Self, GeometryError> {
        let points: Vec<Point3> = points
            .into_iter()
            .filter(|p| p.coords.iter().all(|c| c.is_finite()))
            .collect();
        if points.is_empty() {
            return Err(GeometryError::EmptySet);
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Coplanar vertices of an object's bottom face.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexSet {
    vertices: Vec<Point3>,
}

impl VertexSet {
    /// Validates count, finiteness and coplanarity. Collinear sets are
    /// accepted here and rejected by [`build_bottom_frame`].
    pub fn new(vertices: Vec<Point3>) -> Result<Self, GeometryError> {
        if vertices.len() < 3 {
            return Err(GeometryError::TooFewPoints {
                needed: 3,
                got: vertices.len(),
            });
        }
        if vertices
            .iter()
            .any(|p| p.coords.iter().any(|c| !c.is_finite()))
        {
            return Err(GeometryError::EmptySet);
        }
        if let Some((i, j, k)) = frame::max_area_triangle(&vertices) {
            let n = (vertices[j] - vertices[i])
                .cross(&(vertices[k] - vertices[i]))
                .normalize();
            let residual = vertices
                .iter()
                .map(|v| (v - vertices[i]).dot(&n).abs())
                .fold(0.0, f64::max);
            if residual > COPLANARITY_TOL {
                return Err(GeometryError::NonCoplanar { residual });
            }
        }
        Ok(Self { vertices })
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn centroid(&self) -> Point3 {
        centroid(&self.vertices)
    }
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Point3,
    pub max: Point3,
}

impl Aabb {
    pub fn from_points(points: &[Point3]) -> Option<Self> {
        let first = points.first()?;
        let mut min = *first;
        let mut max = *first;
        for p in points {
            for i in 0..3 {
                min[i] = min[i].min(p[i]);
                max[i] = max[i].max(p[i]);
            }
        }
        Some(Self { min, max })
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    /// Scales every side by `1 + frac` about the center, then widens any
    /// axis still thinner than `min_side`. Flat rims get a usable volume.
    pub fn inflated(&self, frac: f64, min_side: f64) -> Self {
        let ext = self.extent();
        let mut min = self.min;
        let mut max = self.max;
        for i in 0..3 {
            let side = ext[i] * (1.0 + frac);
            let grow = 0.5 * (side.max(min_side) - ext[i]);
            min[i] -= grow;
            max[i] += grow;
        }
        Self { min, max }
    }

    /// Grown by `d` on every side.
    pub fn padded(&self, d: f64) -> Self {
        let pad = Vec3::repeat(d);
        Self {
            min: self.min - pad,
            max: self.max + pad,
        }
    }

    pub fn volume(&self) -> f64 {
        let e = self.extent();
        e.x * e.y * e.z
    }

    pub fn contains(&self, p: &Point3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }
}

pub fn centroid(points: &[Point3]) -> Point3 {
    let n = points.len().max(1) as f64;
    let sum = points.iter().fold(Vec3::zeros(), |acc, p| acc + p.coords);
    Point3::from(sum / n)
}

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::{GeometryError, Point3, Vec3, VertexSet};

/// Rigid transform from the object-bottom frame to the world frame.
///
/// `rotation` holds the frame axes `(a_x, a_y, a_z)` as columns and `origin`
/// is the vertex centroid. The bottom face lies in the frame's xy-plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BottomFrame {
    pub rotation: Matrix3<f64>,
    pub origin: Point3,
}

impl BottomFrame {
    pub fn axis_x(&self) -> Vec3 {
        self.rotation.column(0).into_owned()
    }

    pub fn axis_y(&self) -> Vec3 {
        self.rotation.column(1).into_owned()
    }

    pub fn axis_z(&self) -> Vec3 {
        self.rotation.column(2).into_owned()
    }

    /// World point to bottom-frame coordinates.
    pub fn to_local(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation.transpose() * (p - self.origin))
    }

    /// Bottom-frame coordinates to world point.
    pub fn to_world(&self, p: &Point3) -> Point3 {
        self.origin + self.rotation * p.coords
    }

    /// The homogeneous 4x4 matrix of the transform.
    pub fn homogeneous(&self) -> nalgebra::Matrix4<f64> {
        let mut m = nalgebra::Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3)
            .copy_from(&self.origin.coords);
        m
    }
}

/// Index triple with the largest triangle area, or `None` when every
/// triple is collinear (relative to the set's scale).
pub(crate) fn max_area_triangle(points: &[Point3]) -> Option<(usize, usize, usize)> {
    let n = points.len();
    let mut best = (0.0, None);
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let area2 = (points[j] - points[i])
                    .cross(&(points[k] - points[i]))
                    .norm();
                if area2 > best.0 {
                    best = (area2, Some((i, j, k)));
                }
            }
        }
    }
    let scale = points
        .iter()
        .flat_map(|p| points.iter().map(move |q| (p - q).norm()))
        .fold(0.0, f64::max);
    match best {
        (area2, Some(t)) if area2 > 1e-10 * scale * scale && scale > 0.0 => Some(t),
        _ => None,
    }
}

/// Builds the bottom frame of a coplanar vertex set.
///
/// The normal comes from the largest-area vertex triangle and `a_y` from the
/// triangle vertex farthest from the centroid, projected into the plane.
pub fn build_bottom_frame(vertices: &VertexSet) -> Result<BottomFrame, GeometryError> {
    let v = vertices.vertices();
    let (i, j, k) = max_area_triangle(v).ok_or(GeometryError::DegenerateVertices)?;
    let origin = vertices.centroid();

    let a_z = (v[j] - v[i]).cross(&(v[k] - v[i])).normalize();

    let far = [i, j, k]
        .into_iter()
        .max_by(|&p, &q| {
            (v[p] - origin)
                .norm()
                .total_cmp(&(v[q] - origin).norm())
                .then(q.cmp(&p))
        })
        .expect("triple is non-empty");
    let dv = v[far] - origin;
    let in_plane = dv - a_z * dv.dot(&a_z);
    if in_plane.norm() < 1e-12 {
        return Err(GeometryError::DegenerateVertices);
    }
    let a_y = in_plane.normalize();
    let a_x = a_y.cross(&a_z).normalize();

    Ok(BottomFrame {
        rotation: Matrix3::from_columns(&[a_x, a_y, a_z]),
        origin,
    })
}

pub fn to_frame(points: &[Point3], frame: &BottomFrame) -> Vec<Point3> {
    points.iter().map(|p| frame.to_local(p)).collect()
}

pub fn from_frame(points: &[Point3], frame: &BottomFrame) -> Vec<Point3> {
    points.iter().map(|p| frame.to_world(p)).collect()
}

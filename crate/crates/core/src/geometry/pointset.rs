use nalgebra::{Matrix3, SymmetricEigen};

use super::{centroid, GeometryError, Point2, Point3, Vec2, Vec3};

/// Length of the closed loop through `points` in order, including the
/// closing segment.
pub fn polyline_perimeter(points: &[Point3]) -> Result<f64, GeometryError> {
    if points.len() < 3 {
        return Err(GeometryError::TooFewPoints {
            needed: 3,
            got: points.len(),
        });
    }
    Ok(closed_length(points))
}

pub(crate) fn closed_length(points: &[Point3]) -> f64 {
    let n = points.len();
    (0..n)
        .map(|i| (points[(i + 1) % n] - points[i]).norm())
        .sum()
}

/// 2D principal component analysis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pca2 {
    pub mean: Point2,
    /// Unit major axis, first nonzero component positive.
    pub axis: Vec2,
    /// Covariance eigenvalues, largest first.
    pub eigenvalues: [f64; 2],
}

impl Pca2 {
    /// `λ_min / λ_max`; 1 for an isotropic spread.
    pub fn isotropy(&self) -> f64 {
        self.eigenvalues[1] / self.eigenvalues[0]
    }
}

fn sign_normalized(v: Vec2) -> Vec2 {
    let lead = if v.x.abs() > 1e-12 { v.x } else { v.y };
    if lead < 0.0 {
        -v
    } else {
        v
    }
}

pub fn pca_2d(points: &[Point2]) -> Result<Pca2, GeometryError> {
    if points.len() < 2 {
        return Err(GeometryError::TooFewPoints {
            needed: 2,
            got: points.len(),
        });
    }
    let n = points.len() as f64;
    let mean = Point2::from(points.iter().fold(Vec2::zeros(), |a, p| a + p.coords) / n);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in points {
        let d = p - mean;
        sxx += d.x * d.x;
        sxy += d.x * d.y;
        syy += d.y * d.y;
    }
    sxx /= n;
    sxy /= n;
    syy /= n;
    let tr = sxx + syy;
    let scale = points
        .iter()
        .map(|p| p.coords.norm_squared())
        .fold(0.0, f64::max)
        .max(1.0);
    if tr <= 1e-24 * scale {
        return Err(GeometryError::DegenerateSpread);
    }
    let half_gap = (0.25 * (sxx - syy).powi(2) + sxy * sxy).sqrt();
    let l1 = 0.5 * tr + half_gap;
    let l2 = (0.5 * tr - half_gap).max(0.0);
    let axis = if sxy.abs() > 1e-15 * tr {
        // pick the better conditioned of the two equivalent eigenvector forms
        let a = Vec2::new(l1 - syy, sxy);
        let b = Vec2::new(sxy, l1 - sxx);
        if a.norm() >= b.norm() {
            a
        } else {
            b
        }
    } else if sxx >= syy {
        Vec2::x()
    } else {
        Vec2::y()
    };
    Ok(Pca2 {
        mean,
        axis: sign_normalized(axis.normalize()),
        eigenvalues: [l1, l2],
    })
}

/// Unit eigenvector of the largest covariance eigenvalue.
pub fn pca_principal_axis(points: &[Point2]) -> Result<Vec2, GeometryError> {
    pca_2d(points).map(|p| p.axis)
}

/// Best-fit plane of a 3D point set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneFit {
    pub centroid: Point3,
    /// Principal directions, largest spread first. `axes[2]` is the normal,
    /// oriented so that `axes[0] × axes[1] = axes[2]`.
    pub axes: [Vec3; 3],
    pub eigenvalues: [f64; 3],
}

impl PlaneFit {
    pub fn normal(&self) -> Vec3 {
        self.axes[2]
    }
}

pub fn plane_fit(points: &[Point3]) -> Result<PlaneFit, GeometryError> {
    if points.len() < 3 {
        return Err(GeometryError::TooFewPoints {
            needed: 3,
            got: points.len(),
        });
    }
    let c = centroid(points);
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - c;
        cov += d * d.transpose();
    }
    cov /= points.len() as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let vals = order.map(|i| eig.eigenvalues[i].max(0.0));
    if vals[0] <= 1e-24 {
        return Err(GeometryError::DegenerateSpread);
    }
    let a0: Vec3 = eig.eigenvectors.column(order[0]).into_owned();
    let a1: Vec3 = eig.eigenvectors.column(order[1]).into_owned();
    let a2 = a0.cross(&a1).normalize();
    Ok(PlaneFit {
        centroid: c,
        axes: [a0, a1, a2],
        eigenvalues: vals,
    })
}

/// Indices chosen by greedy max-min selection starting at `start`.
/// Ties go to the lowest index.
pub fn farthest_point_sampling_indices(
    points: &[Point3],
    k: usize,
    start: usize,
) -> Result<Vec<usize>, GeometryError> {
    let n = points.len();
    if n == 0 {
        return Err(GeometryError::EmptySet);
    }
    if k == 0 || k > n {
        return Err(GeometryError::KTooLarge { k, n });
    }
    if start >= n {
        return Err(GeometryError::StartOutOfRange { start, n });
    }
    let mut chosen = Vec::with_capacity(k);
    let mut dist = vec![f64::INFINITY; n];
    let mut cur = start;
    for _ in 0..k {
        chosen.push(cur);
        let p = points[cur];
        let mut best = (f64::NEG_INFINITY, cur);
        for (i, d) in dist.iter_mut().enumerate() {
            *d = d.min((points[i] - p).norm_squared());
            if *d > best.0 {
                best = (*d, i);
            }
        }
        cur = best.1;
    }
    Ok(chosen)
}

pub fn farthest_point_sampling(
    points: &[Point3],
    k: usize,
    start: usize,
) -> Result<Vec<Point3>, GeometryError> {
    Ok(farthest_point_sampling_indices(points, k, start)?
        .into_iter()
        .map(|i| points[i])
        .collect())
}

fn nearest_sq(p: &Point3, set: &[Point3]) -> f64 {
    set.iter()
        .map(|q| (p - q).norm_squared())
        .fold(f64::INFINITY, f64::min)
}

/// Mean squared nearest-neighbour distance from `a` to `b` plus the same
/// from `b` to `a`.
pub fn chamfer_distance(a: &[Point3], b: &[Point3]) -> Result<f64, GeometryError> {
    if a.is_empty() || b.is_empty() {
        return Err(GeometryError::EmptySet);
    }
    let ab = a.iter().map(|p| nearest_sq(p, b)).sum::<f64>() / a.len() as f64;
    let ba = b.iter().map(|p| nearest_sq(p, a)).sum::<f64>() / b.len() as f64;
    Ok(ab + ba)
}

fn circle_two(a: Point2, b: Point2) -> (Point2, f64) {
    let c = nalgebra::center(&a, &b);
    (c, (a - c).norm())
}

fn circle_three(a: Point2, b: Point2, c: Point2) -> (Point2, f64) {
    let bx = b - a;
    let cx = c - a;
    let d = 2.0 * (bx.x * cx.y - bx.y * cx.x);
    if d.abs() < 1e-300 {
        // collinear: the widest pair spans the others
        let pairs = [(a, b), (a, c), (b, c)];
        let (p, q) = pairs
            .into_iter()
            .max_by(|x, y| (x.0 - x.1).norm().total_cmp(&(y.0 - y.1).norm()))
            .unwrap();
        return circle_two(p, q);
    }
    let b2 = bx.norm_squared();
    let c2 = cx.norm_squared();
    let ux = (cx.y * b2 - bx.y * c2) / d;
    let uy = (bx.x * c2 - cx.x * b2) / d;
    let center = a + Vec2::new(ux, uy);
    (center, Vec2::new(ux, uy).norm())
}

fn inside(circle: &(Point2, f64), p: &Point2) -> bool {
    (p - circle.0).norm() <= circle.1 * (1.0 + 1e-12) + 1e-15
}

/// Smallest circle containing every point: `(center, radius)`.
pub fn minimal_enclosing_circle(points: &[Point2]) -> Result<(Point2, f64), GeometryError> {
    let Some(&first) = points.first() else {
        return Err(GeometryError::EmptySet);
    };
    let mut c = (first, 0.0);
    for i in 1..points.len() {
        if inside(&c, &points[i]) {
            continue;
        }
        c = (points[i], 0.0);
        for j in 0..i {
            if inside(&c, &points[j]) {
                continue;
            }
            c = circle_two(points[i], points[j]);
            for k in 0..j {
                if !inside(&c, &points[k]) {
                    c = circle_three(points[i], points[j], points[k]);
                }
            }
        }
    }
    Ok(c)
}

fn cross(o: &Point2, a: &Point2, b: &Point2) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Perimeter of the convex hull (monotone chain). Collinear input gives
/// twice the extent; a single point gives zero.
pub fn convex_hull_perimeter(points: &[Point2]) -> f64 {
    let mut pts: Vec<Point2> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 2 {
        return 0.0;
    }
    let mut hull: Vec<Point2> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let base = hull.len();
        let iter: Box<dyn Iterator<Item = &Point2>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for p in iter {
            while hull.len() >= base + 2
                && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0
            {
                hull.pop();
            }
            hull.push(*p);
        }
        hull.pop();
    }
    let n = hull.len();
    (0..n).map(|i| (hull[(i + 1) % n] - hull[i]).norm()).sum()
}

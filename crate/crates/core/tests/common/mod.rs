#![allow(dead_code)]

use std::f64::consts::TAU;

use bagging::geometry::{Point3, Vec3};
use nalgebra::{Rotation3, Unit};
use rand::Rng;

/// Base polygons in their own plane (z = 0), centered near the origin.
pub fn base_shapes() -> Vec<(&'static str, Vec<Point3>)> {
    let rect = |w: f64, h: f64| {
        vec![
            Point3::new(-w / 2.0, -h / 2.0, 0.0),
            Point3::new(w / 2.0, -h / 2.0, 0.0),
            Point3::new(w / 2.0, h / 2.0, 0.0),
            Point3::new(-w / 2.0, h / 2.0, 0.0),
        ]
    };
    let ngon = |n: usize, r: f64| -> Vec<Point3> {
        (0..n)
            .map(|i| {
                let t = TAU * i as f64 / n as f64;
                Point3::new(r * t.cos(), r * t.sin(), 0.0)
            })
            .collect()
    };
    let lumpy: Vec<Point3> = (0..11)
        .map(|i| {
            let t = TAU * i as f64 / 11.0;
            let r = 0.062 + 0.006 * (3.0 * t).sin();
            Point3::new(r * t.cos(), r * t.sin(), 0.0)
        })
        .collect();
    let two_boxes = vec![
        Point3::new(-0.085, -0.04, 0.0),
        Point3::new(0.085, -0.04, 0.0),
        Point3::new(0.085, 0.04, 0.0),
        Point3::new(0.0, 0.05, 0.0),
        Point3::new(-0.085, 0.04, 0.0),
    ];
    let trapezoid = vec![
        Point3::new(-0.08, -0.04, 0.0),
        Point3::new(0.08, -0.04, 0.0),
        Point3::new(0.05, 0.04, 0.0),
        Point3::new(-0.05, 0.04, 0.0),
    ];
    let h = 0.12 * 3f64.sqrt() / 2.0;
    let triangle = vec![
        Point3::new(-0.06, -h / 3.0, 0.0),
        Point3::new(0.06, -h / 3.0, 0.0),
        Point3::new(0.0, 2.0 * h / 3.0, 0.0),
    ];
    let right_triangle = vec![
        Point3::new(-0.05, -0.03, 0.0),
        Point3::new(0.09, -0.03, 0.0),
        Point3::new(-0.05, 0.05, 0.0),
    ];
    vec![
        ("coffee_box", rect(0.16, 0.10)),
        ("slim_box", rect(0.10, 0.04)),
        ("long_box", rect(0.17, 0.05)),
        ("square", rect(0.11, 0.11)),
        ("triangle", triangle),
        ("right_triangle", right_triangle),
        ("pentagon", ngon(5, 0.06)),
        ("hexagon", ngon(6, 0.07)),
        ("cylinder", ngon(16, 0.05)),
        ("grapefruit", lumpy),
        ("bound_pair", two_boxes),
        ("trapezoid", trapezoid),
    ]
}

/// Random rigid placement of a planar shape: in-plane spin, tilt of the
/// base within `max_tilt` of horizontal, and an offset.
pub fn place<R: Rng>(shape: &[Point3], rng: &mut R, max_tilt: f64) -> Vec<Point3> {
    let spin = Rotation3::from_axis_angle(&Vec3::z_axis(), rng.random_range(0.0..TAU));
    let axis = Unit::new_normalize(Vec3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        0.0,
    ));
    let tilt = Rotation3::from_axis_angle(&axis, rng.random_range(0.0..max_tilt));
    let offset = Vec3::new(
        rng.random_range(-0.2..0.2),
        rng.random_range(-0.2..0.2),
        rng.random_range(0.2..0.5),
    );
    shape
        .iter()
        .map(|p| Point3::from(tilt * (spin * p.coords) + offset))
        .collect()
}

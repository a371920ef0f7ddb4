use std::f64::consts::TAU;

use bagging::extraction::{extract_soi, extract_with_model, fit_gmm, GmmConfig, RimTracker};
use bagging::geometry::{
    ellipse_perimeter, polyline_perimeter, Ellipse3D, Point3, PointCloud, Vec3,
};
use bagging::soi::{max_point_distance, OrderedSoi};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

/// Noisy samples around an ellipse rim plus uniform outliers over the
/// rim's padded bounding box.
fn rim_cloud(e: &Ellipse3D, n: usize, sigma: f64, outlier_frac: f64, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma.max(1e-300)).unwrap();
    let n_out = (outlier_frac * n as f64).round() as usize;
    let mut pts: Vec<Point3> = (0..n - n_out)
        .map(|_| {
            let p = e.point_at(rng.random::<f64>() * TAU);
            p + Vec3::from_fn(|_, _| if sigma > 0.0 { rng.sample(noise) } else { 0.0 })
        })
        .collect();
    let lo = pts
        .iter()
        .fold(Vec3::repeat(f64::MAX), |a, p| a.inf(&p.coords));
    let hi = pts
        .iter()
        .fold(Vec3::repeat(f64::MIN), |a, p| a.sup(&p.coords));
    for _ in 0..n_out {
        pts.push(Point3::from(Vec3::from_fn(|i, _| {
            rng.random_range(lo[i]..=hi[i])
        })));
    }
    PointCloud::new(pts).unwrap()
}

fn ellipse(a: f64, b: f64, tilt: f64, center: Point3) -> Ellipse3D {
    let u = Vec3::x();
    let v = Vec3::new(0.0, tilt.cos(), tilt.sin());
    Ellipse3D::new(center, u, v, a, b).unwrap()
}

fn rmse_to_curve(soi: &OrderedSoi, e: &Ellipse3D) -> f64 {
    let s: f64 = soi.points.iter().map(|p| e.distance_to(p).powi(2)).sum();
    (s / soi.len() as f64).sqrt()
}

#[test]
fn rim_with_outliers_is_recovered() {
    let e = ellipse(0.12, 0.09, 0.2, Point3::new(0.1, 0.0, 0.4));
    let cloud = rim_cloud(&e, 2000, 5e-3, 0.2, 7);
    let (soi, model) = extract_with_model(&cloud, &GmmConfig::default(), None).unwrap();
    assert_eq!(soi.len(), 32);
    assert!(rmse_to_curve(&soi, &e) < 1e-2);
    for w in model.loglik_history.windows(2) {
        assert!(w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0));
    }
    assert!((model.total_weight() - 1.0).abs() < 1e-12);
}

#[test]
fn perimeter_of_extracted_rim() {
    let exact = ellipse_perimeter(0.12, 0.09).unwrap();
    for seed in 0..4 {
        let e = ellipse(0.12, 0.09, 0.3, Point3::new(0.0, 0.2, 0.3));
        let cloud = rim_cloud(&e, 2000, 2e-3, 0.2, seed);
        let soi = extract_soi(&cloud, &GmmConfig::default(), None).unwrap();
        let per = polyline_perimeter(&soi.points).unwrap();
        assert!(
            (per / exact - 1.0).abs() < 0.03,
            "seed {seed}: {per} vs {exact}"
        );
    }
}

/// Cloud around fixed material points of the rim: `per_point` noisy
/// samples each, plus uniform outliers.
fn material_cloud(
    e: &Ellipse3D,
    n_material: usize,
    per_point: usize,
    sigma: f64,
    outlier_frac: f64,
    seed: u64,
) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).unwrap();
    let mut pts = Vec::new();
    for p in e.sample(n_material) {
        for _ in 0..per_point {
            pts.push(p + Vec3::from_fn(|_, _| rng.sample(noise)));
        }
    }
    let lo = pts
        .iter()
        .fold(Vec3::repeat(f64::MAX), |a, p| a.inf(&p.coords));
    let hi = pts
        .iter()
        .fold(Vec3::repeat(f64::MIN), |a, p| a.sup(&p.coords));
    let n_out = (outlier_frac * pts.len() as f64 / (1.0 - outlier_frac)).ceil() as usize;
    for _ in 0..n_out {
        pts.push(Point3::from(Vec3::from_fn(|i, _| {
            rng.random_range(lo[i]..=hi[i])
        })));
    }
    PointCloud::new(pts).unwrap()
}

#[test]
fn moving_rim_keeps_correspondence() {
    let sigma = 2e-3;
    let motion = Vec3::new(0.002, -0.001, 0.002);
    let e0 = ellipse(0.12, 0.09, 0.1, Point3::new(0.1, 0.0, 0.4));
    let mut e1 = e0;
    e1.center += motion;
    let cfg = GmmConfig::default();
    let c0 = material_cloud(&e0, 32, 50, sigma, 0.1, 1);
    let c1 = material_cloud(&e1, 32, 50, sigma, 0.1, 2);

    let first = extract_soi(&c0, &cfg, None).unwrap();
    let second = extract_soi(&c1, &cfg, Some(&first)).unwrap();
    assert_eq!(second.timestamp, first.timestamp + 1);
    let worst = max_point_distance(&first.points, &second.points);
    assert!(worst <= motion.norm() + 2.0 * sigma, "{worst}");

    let mut tracker = RimTracker::new(cfg);
    let first = tracker.update(&c0).unwrap();
    let second = tracker.update(&c1).unwrap();
    let worst = max_point_distance(&first.points, &second.points);
    assert!(worst <= motion.norm() + 2.0 * sigma, "{worst}");
}

#[test]
fn extraction_is_deterministic() {
    let e = ellipse(0.1, 0.08, 0.0, Point3::new(0.0, 0.0, 0.5));
    let cloud = rim_cloud(&e, 1500, 3e-3, 0.1, 9);
    let cfg = GmmConfig::default();
    assert_eq!(
        extract_soi(&cloud, &cfg, None).unwrap(),
        extract_soi(&cloud, &cfg, None).unwrap()
    );
}

#[test]
fn warm_start_reproduces_cold_start() {
    let e = ellipse(0.1, 0.08, 0.2, Point3::new(0.0, 0.0, 0.5));
    let cloud = rim_cloud(&e, 1500, 3e-3, 0.1, 4);
    let cfg = GmmConfig {
        loglik_rel_tol: 1e-15,
        max_iters: 2000,
        ..Default::default()
    };
    let mut tracker = RimTracker::new(cfg);
    let cold = tracker.update(&cloud).unwrap();
    let warm = tracker.update(&cloud).unwrap();
    for (p, q) in cold.points.iter().zip(&warm.points) {
        assert!((p - q).norm() < 1e-6, "{}", (p - q).norm());
    }
}

#[test]
fn warm_start_length_mismatch() {
    let e = ellipse(0.1, 0.08, 0.0, Point3::origin());
    let cloud = rim_cloud(&e, 500, 1e-3, 0.0, 1);
    let prev = OrderedSoi::new(vec![Point3::origin(); 5], 0);
    assert!(fit_gmm(&cloud, &GmmConfig::default(), Some(&prev)).is_err());
}

#[test]
fn rim_needs_three_components() {
    let e = ellipse(0.1, 0.08, 0.0, Point3::origin());
    let cloud = rim_cloud(&e, 500, 1e-3, 0.0, 1);
    let cfg = GmmConfig {
        n_x: 2,
        ..Default::default()
    };
    assert!(fit_gmm(&cloud, &cfg, None).is_ok());
    assert!(extract_soi(&cloud, &cfg, None).is_err());
}

//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

mod common;

use std::f64::consts::TAU;
use std::time::Instant;

use bagging::extraction::{extract_with_model, GmmConfig};
use bagging::generation::{solve, BaggingConstraintParams};
use bagging::geometry::{
    build_bottom_frame, ellipse_perimeter, to_frame, Ellipse3D, Point3, PointCloud, Vec3, VertexSet,
};
use bagging::harness::{run_pipeline, run_stages, write_outputs, LogRecord, Scenario, Stage};
use bagging::planning::{collision_check, soi_distance, Obstacle};
use bagging::servo::{broyden_update, build_prediction, predict, LinearPlant, Plant};
use bagging::sim::{numeric_jacobian, rest_state, BagModelConfig};
use bagging::soi::OrderedSoi;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

type Check = fn() -> Verdict;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn main() {
    let criteria: [(&str, Check); 8] = [
        ("extraction accuracy", extraction_accuracy),
        ("bagging-SOI feasibility", bagging_feasibility),
        ("planner reliability", planner_reliability),
        ("prediction exactness", prediction_exactness),
        ("Broyden secant and convergence", broyden_convergence),
        ("closed-loop tracking", closed_loop_tracking),
        ("perimeter approximation", perimeter_approximation),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let v = check();
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {} {name}: {tag} ({}; {:.1} s)",
            i + 1,
            v.detail,
            t.elapsed().as_secs_f64()
        );
        failed += usize::from(!v.pass);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

// 1 -------------------------------------------------------------------------

fn extraction_accuracy() -> Verdict {
    let (a, b, sigma, n, outliers, n_x) = (0.12, 0.09, 5e-3, 2000, 0.2, 32);
    let mut worst_rmse: f64 = 0.0;
    let mut worst_time: f64 = 0.0;
    let mut monotone = true;
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let tilt: f64 = rng.random_range(-0.5..0.5);
        let e = Ellipse3D::new(
            Point3::new(
                rng.random_range(-0.1..0.1),
                rng.random_range(-0.1..0.1),
                0.3,
            ),
            Vec3::new(tilt.cos(), tilt.sin(), 0.0),
            Vec3::new(-tilt.sin() * 0.9, tilt.cos() * 0.9, 0.3f64.sin()).normalize(),
            a,
            b,
        );
        let e = match e {
            Ok(e) => e,
            Err(err) => return verdict(false, format!("generator: {err}")),
        };
        let cloud = synthetic_rim_cloud(&e, n, sigma, outliers, &mut rng);
        let t = Instant::now();
        let cfg = GmmConfig {
            n_x,
            ..Default::default()
        };
        let (soi, model) = match extract_with_model(&cloud, &cfg, None) {
            Ok(r) => r,
            Err(err) => return verdict(false, format!("seed {seed}: {err}")),
        };
        worst_time = worst_time.max(t.elapsed().as_secs_f64());
        let rmse = (soi
            .points
            .iter()
            .map(|p| e.distance_to(p).powi(2))
            .sum::<f64>()
            / soi.len() as f64)
            .sqrt();
        worst_rmse = worst_rmse.max(rmse);
        monotone &= model
            .loglik_history
            .windows(2)
            .all(|w| w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0));
    }
    verdict(
        worst_rmse < 0.01 && monotone && worst_time < 2.0,
        format!(
            "worst RMSE {:.2} mm < 10 mm over 5 clouds, log-likelihood non-decreasing: {monotone}, worst fit {:.2} s < 2 s",
            worst_rmse * 1e3,
            worst_time
        ),
    )
}

/// Uniform-angle samples of `e` with isotropic noise, plus outliers drawn
/// uniformly from the noisy rim's bounding box; outliers are `frac` of `n`.
fn synthetic_rim_cloud(
    e: &Ellipse3D,
    n: usize,
    sigma: f64,
    frac: f64,
    rng: &mut ChaCha8Rng,
) -> PointCloud {
    let noise = Normal::new(0.0, sigma).unwrap();
    let n_out = (frac * n as f64).round() as usize;
    let mut pts: Vec<Point3> = (0..n - n_out)
        .map(|_| {
            let t: f64 = rng.random_range(0.0..TAU);
            e.center
                + e.u * (e.rho_u * t.cos())
                + e.v * (e.rho_v * t.sin())
                + Vec3::from_fn(|_, _| noise.sample(rng))
        })
        .collect();
    let lo = pts
        .iter()
        .fold(Vec3::repeat(f64::MAX), |m, p| m.inf(&p.coords));
    let hi = pts
        .iter()
        .fold(Vec3::repeat(f64::MIN), |m, p| m.sup(&p.coords));
    for _ in 0..n_out {
        pts.push(Point3::from(Vec3::from_fn(|i, _| {
            rng.random_range(lo[i]..=hi[i])
        })));
    }
    PointCloud::new(pts).unwrap()
}

// 2 -------------------------------------------------------------------------

fn bagging_feasibility() -> Verdict {
    let r = 0.68;
    let p = BaggingConstraintParams::new(0.912, 0.007, 0.9943, r);
    let shapes = common::base_shapes();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut trials, mut ok, mut worst_gap, mut worst_time) = (0, 0, 0.0f64, 0.0f64);
    let mut failures = Vec::new();
    for (name, shape) in &shapes {
        for _ in 0..17 {
            trials += 1;
            let placed = common::place(shape, &mut rng, 0.6);
            let t = Instant::now();
            let result = VertexSet::new(placed)
                .map_err(|e| e.to_string())
                .and_then(|v| {
                    let frame = build_bottom_frame(&v).map_err(|e| e.to_string())?;
                    let vm = to_frame(v.vertices(), &frame);
                    solve(&vm, &p).map(|s| (s, vm)).map_err(|e| e.to_string())
                });
            worst_time = worst_time.max(t.elapsed().as_secs_f64());
            match result {
                Ok(((e, rep), vm)) => {
                    // independent recomputation of C1 and the perimeter
                    let (c, s) = (e.alpha.cos(), e.alpha.sin());
                    let c1 = vm
                        .iter()
                        .map(|q| {
                            let (dx, dy) = (q.x - e.tau_x, q.y - e.tau_y);
                            let (x, y) = (c * dx + s * dy, -s * dx + c * dy);
                            (x / e.rho_a).powi(2) + (y / e.rho_b).powi(2)
                        })
                        .fold(0.0, f64::max);
                    let len = quadrature_perimeter(e.rho_a, e.rho_b);
                    let gap = (len - r).abs();
                    worst_gap = worst_gap.max(gap);
                    let c2 = e.tau_x.hypot(e.tau_y);
                    if rep.satisfies(&p) && c1 < p.lambda1 && c2 <= p.lambda2 && gap < 5e-3 {
                        ok += 1;
                    } else {
                        failures.push(format!("{name}: {rep:?}"));
                    }
                }
                Err(e) => failures.push(format!("{name}: {e}")),
            }
        }
    }
    let mut detail = format!(
        "{ok}/{trials} trials over {} shapes satisfy C1-C3, worst |L - R| {:.2} mm < 5 mm, worst {:.2} s < 1 s",
        shapes.len(),
        worst_gap * 1e3,
        worst_time
    );
    if let Some(f) = failures.first() {
        detail.push_str(&format!("; first failure {f}"));
    }
    verdict(ok == trials && trials >= 200 && worst_time < 1.0, detail)
}

/// Perimeter by the trapezoid rule over one period, which converges
/// geometrically for smooth periodic integrands.
fn quadrature_perimeter(a: f64, b: f64) -> f64 {
    let n = 4096;
    let h = TAU / n as f64;
    (0..n)
        .map(|k| {
            let t = k as f64 * h;
            (a * a * t.sin().powi(2) + b * b * t.cos().powi(2)).sqrt()
        })
        .sum::<f64>()
        * h
}

// 3 -------------------------------------------------------------------------

const CLASSES: [&str; 5] = [
    "coffee_box",
    "canned_cylinder",
    "grapefruit",
    "triangular_prism",
    "bound_objects",
];

/// Rims of a straight, index-wise sweep from `a` to `b`.
fn straight_sweep(a: &[Point3], b: &[Point3], steps: usize) -> Vec<Vec<Point3>> {
    (0..=steps)
        .map(|k| {
            let s = k as f64 / steps as f64;
            a.iter().zip(b).map(|(p, q)| p + (q - p) * s).collect()
        })
        .collect()
}

/// Two to three boxes between the start rim and the bagging rim, at least
/// one of which cuts the straight sweep, none touching the start, bagging
/// or goal rims.
fn obstacle_scene(rims: &[Vec<Point3>; 3], rng: &mut ChaCha8Rng) -> Vec<Obstacle> {
    let sweep = straight_sweep(&rims[0], &rims[1], 30);
    loop {
        let count = rng.random_range(2..=3);
        let boxes: Vec<Obstacle> = (0..count)
            .map(|_| {
                let c = Point3::new(
                    rng.random_range(-0.2..0.4),
                    rng.random_range(-0.25..0.25),
                    rng.random_range(0.19..0.26),
                );
                let h = Vec3::new(
                    rng.random_range(0.02..0.07),
                    rng.random_range(0.02..0.07),
                    rng.random_range(0.01..0.025),
                );
                Obstacle::new(c - h, c + h, 0.005).unwrap()
            })
            .collect();
        let clear = rims.iter().all(|r| !collision_check(r, &boxes));
        let blocks = sweep.iter().any(|r| collision_check(r, &boxes));
        if clear && blocks {
            return boxes;
        }
    }
}

fn planner_reliability() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut lines = Vec::new();
    let mut all_ok = true;
    let mut worst_time: f64 = 0.0;
    let mut violations = Vec::new();
    for class in CLASSES {
        let mut successes = 0;
        for scene in 0..10u64 {
            let mut s = Scenario::with_preset(class);
            s.seed = scene;
            s.object.yaw = rng.random_range(0.0..TAU);
            // the obstacle-free run fixes the start, bagging and goal rims
            let free = run_stages(&s, Stage::Generation).expect("valid scenario");
            let (g0, gd, gs) = match anchors(&free.records) {
                Some(x) => x,
                None => {
                    violations.push(format!("{class}/{scene}: no anchors"));
                    continue;
                }
            };
            s.obstacles = obstacle_scene(&[g0, gd, gs], &mut rng);
            let run = run_stages(&s, Stage::Planning).expect("valid scenario");
            let t = run.report.planning_time_s();
            worst_time = worst_time.max(t);
            if !run.report.stages.planning.is_ok() || t >= 60.0 {
                continue;
            }
            let r = run.report.rim_perimeter.unwrap();
            match check_path(&run.records, &s, r) {
                Ok(()) => successes += 1,
                Err(v) => violations.push(format!("{class}/{scene}: {v}")),
            }
        }
        all_ok &= successes >= 9;
        lines.push(format!("{class} {successes}/10"));
    }
    let mut detail = format!(
        "{}, need >= 9/10 each; worst query {:.2} s < 60 s",
        lines.join(", "),
        worst_time
    );
    if let Some(v) = violations.first() {
        detail.push_str(&format!(
            "; {} invariant violations, first {v}",
            violations.len()
        ));
    }
    verdict(all_ok && violations.is_empty(), detail)
}

fn anchors(records: &[LogRecord]) -> Option<(Vec<Point3>, Vec<Point3>, Vec<Point3>)> {
    let g0 = records.iter().find_map(|r| match r {
        LogRecord::Extraction { soi, .. } => Some(soi.clone()),
        _ => None,
    })?;
    records.iter().find_map(|r| match r {
        LogRecord::Generation { g_dag, g_star, .. } => {
            Some((g0.clone(), g_dag.clone(), g_star.clone()))
        }
        _ => None,
    })
}

fn check_path(records: &[LogRecord], s: &Scenario, r: f64) -> Result<(), String> {
    let cfg = &s.planner;
    let nodes: Vec<(&Vec<Point3>, &Ellipse3D)> = records
        .iter()
        .filter_map(|rec| match rec {
            LogRecord::PathNode {
                points, ellipse, ..
            } => Some((points, ellipse)),
            _ => None,
        })
        .collect();
    for (i, (points, e)) in nodes.iter().enumerate() {
        let dev = (r / e.perimeter() - 1.0).abs();
        if dev > cfg.lambda4 + 1e-12 {
            return Err(format!("node {i} perimeter band {dev:.2e}"));
        }
        if let Some(d) = points.iter().map(|p| e.distance_to(p)).find(|d| *d > 1e-6) {
            return Err(format!("node {i} off ellipse by {d:.2e}"));
        }
        let centroid =
            Point3::from(points.iter().map(|p| p.coords).sum::<Vec3>() / points.len() as f64);
        if (centroid - e.center).norm() > cfg.lambda5 + 1e-12 {
            return Err(format!("node {i} center offset"));
        }
        if collision_check(points, &s.obstacles) {
            return Err(format!("node {i} collides"));
        }
    }
    for (i, w) in nodes.windows(2).enumerate() {
        let step = soi_distance(w[0].0, w[1].0);
        if step > cfg.step_size + cfg.connect_epsilon + 1e-12 {
            return Err(format!("step {i} is {step:.4} m"));
        }
    }
    Ok(())
}

// 4 -------------------------------------------------------------------------

fn prediction_exactness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let m = rng.random_range(3..=60);
        let p = rng.random_range(1..=12);
        let t = rng.random_range(1..=10);
        let j = DMatrix::from_fn(m, p, |_, _| StandardNormal.sample(&mut rng));
        let x = DVector::from_fn(m, |_, _| StandardNormal.sample(&mut rng));
        let u = DVector::from_fn(p * t, |_, _| StandardNormal.sample(&mut rng));
        let (a, b) = build_prediction(&j, t);
        let stacked = predict(&a, &b, &x, &u);
        let mut xi = x.clone();
        for k in 0..t {
            xi += &j * u.rows(k * p, p);
            let d = (stacked.rows(k * m, m) - &xi).amax();
            worst = worst.max(d);
        }
    }
    verdict(
        worst <= 1e-12,
        format!("100 random cases, T <= 10, worst deviation {worst:.1e} <= 1e-12"),
    )
}

// 5 -------------------------------------------------------------------------

fn broyden_convergence() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_secant: f64 = 0.0;
    let mut j = DMatrix::from_fn(96, 12, |_, _| StandardNormal.sample(&mut rng));
    for _ in 0..200 {
        let u = DVector::from_fn(12, |_, _| StandardNormal.sample(&mut rng));
        let s = DVector::from_fn(96, |_, _| StandardNormal.sample(&mut rng));
        j = broyden_update(&j, &s, &u, 1.0).unwrap();
        worst_secant = worst_secant.max((&j * &u - &s).amax() / s.amax().max(1.0));
    }

    // surrogate: the bag's Jacobian at rest, made exact by a linear plant
    let cfg = BagModelConfig::default();
    let g = rest_state(&cfg, Point3::new(0.1, 0.0, 0.15));
    let truth = numeric_jacobian(&g, &cfg, 1e-5).unwrap();
    let start = OrderedSoi::from_vector(&DVector::zeros(truth.nrows()), 0);
    let mut plant = LinearPlant::new(truth.clone(), &start);
    let mut est = DMatrix::zeros(truth.nrows(), truth.ncols());
    // isotropic in command space: each update only corrects J along u
    let scale = DVector::from_element(12, 5e-3);
    let probe = |est: &DMatrix<f64>, rng: &mut ChaCha8Rng| {
        let mut total = 0.0;
        for _ in 0..200 {
            let d = DVector::from_fn(12, |i, _| scale[i] * gauss(rng));
            total += (est * &d - &truth * &d).norm() / (&truth * &d).norm();
        }
        total / 200.0
    };
    let before = probe(&est, &mut rng);
    let mut x = plant.observe().unwrap().to_vector();
    for _ in 0..200 {
        let u = DVector::from_fn(12, |i, _| scale[i] * gauss(&mut rng));
        let next = plant.apply(&u).unwrap().to_vector();
        est = broyden_update(&est, &(&next - &x), &u, 0.5).unwrap();
        x = next;
    }
    let after = probe(&est, &mut rng);
    verdict(
        worst_secant <= 1e-10 && after < 0.05,
        format!(
            "secant residual {worst_secant:.1e} <= 1e-10 over 200 updates; directional error {:.1}% -> {:.2}% < 5% after 200 steps",
            before * 100.0,
            after * 100.0
        ),
    )
}

// 6 -------------------------------------------------------------------------

fn closed_loop_tracking() -> Verdict {
    let mut parts = Vec::new();
    let mut pass = true;
    for (perception, tol) in [(false, 5e-3), (true, 1e-2)] {
        let mut s = Scenario::with_preset("coffee_box");
        s.perception_in_loop = perception;
        let t = Instant::now();
        let run = run_pipeline(&s).expect("valid scenario");
        let secs = t.elapsed().as_secs_f64();
        let r = &run.report;
        let (Some(err), Some(truth), Some(drift)) =
            (r.final_error, r.final_truth_error, r.perimeter_drift)
        else {
            pass = false;
            parts.push(format!(
                "perception {perception}: stopped at {:?}: {}",
                r.failed_stage(),
                r.failure_message().unwrap_or("")
            ));
            continue;
        };
        let ok = err < tol && truth < tol && secs < 60.0 && (perception || drift.abs() < 0.02);
        pass &= ok;
        parts.push(format!(
            "perception {perception}: observed {:.2} mm, true {:.2} mm < {:.0} mm, drift {:.2}%, {:?}, {:.1} s",
            err * 1e3,
            truth * 1e3,
            tol * 1e3,
            drift * 100.0,
            r.servo_outcome.unwrap(),
            secs
        ));
    }
    verdict(pass, parts.join("; "))
}

// 7 -------------------------------------------------------------------------

fn perimeter_approximation() -> Verdict {
    let mut worst: f64 = 0.0;
    let mut at = 1.0;
    for k in 0..=1000 {
        let aspect = 10f64.powf(k as f64 / 1000.0);
        let (a, b) = (0.1 * aspect, 0.1);
        let rel = (ellipse_perimeter(a, b).unwrap() / quadrature_perimeter(a, b) - 1.0).abs();
        if rel > worst {
            worst = rel;
            at = aspect;
        }
    }
    verdict(
        worst < 1e-4,
        format!(
            "1001 aspect ratios in [1, 10], worst relative error {worst:.1e} at {at:.2} < 1e-4"
        ),
    )
}

// 8 -------------------------------------------------------------------------

fn determinism() -> Verdict {
    let mut s = Scenario::with_preset("coffee_box");
    s.perception_in_loop = true;
    s.seed = 8;
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let run = run_pipeline(&s).expect("valid scenario");
        write_outputs(d.path(), &run).expect("writable temp dir");
    }
    let mut same = true;
    let mut sizes = Vec::new();
    for f in ["log.jsonl", "report.json"] {
        let a = std::fs::read(dirs[0].path().join(f)).unwrap();
        let b = std::fs::read(dirs[1].path().join(f)).unwrap();
        same &= a == b;
        sizes.push(format!("{f} {} bytes", a.len()));
    }
    verdict(
        same,
        format!(
            "two perception-in-loop runs, seed 8: {} byte-identical: {same}",
            sizes.join(", ")
        ),
    )
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

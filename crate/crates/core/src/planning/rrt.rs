use nalgebra::{Rotation3, Unit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::collision::collision_check;
use super::regularize::{exact_node, regularize_from, RimBounds};
use super::{BaggingPath, Obstacle, PathNode, PlannerConfig, PlanningError, Segment};
use crate::geometry::{ellipse::ramanujan2, Aabb, Ellipse3D, Point3, Vec3};
use crate::soi::{best_alignment, max_point_distance, OrderedSoi};

/// Smallest, over cyclic shifts and reversal, of the largest per-point
/// distance between two rims of equal length.
pub fn soi_distance(a: &[Point3], b: &[Point3]) -> f64 {
    let n = a.len();
    assert_eq!(n, b.len(), "rims must have equal length");
    let mut best = f64::INFINITY;
    for reversed in [false, true] {
        for shift in 0..n {
            let mut worst: f64 = 0.0;
            for i in 0..n {
                let j = if reversed {
                    (shift + n - i) % n
                } else {
                    (shift + i) % n
                };
                worst = worst.max((a[j] - b[i]).norm_squared());
                if worst >= best {
                    break;
                }
            }
            best = best.min(worst);
        }
    }
    best.sqrt()
}

/// Ellipse a fraction `s` of the way from `a` to `b`: centers and radii
/// blend linearly, the plane turns along the shortest arc, then the major
/// axis turns in-plane by the matching share of its remaining angle.
pub fn interpolate_ellipse(a: &Ellipse3D, b: &Ellipse3D, s: f64) -> Ellipse3D {
    let na = a.normal();
    let (ub, mut nb) = (b.u, b.normal());
    if na.dot(&nb) < 0.0 {
        // (u, -v) traces the same curve with the opposite normal
        nb = -nb;
    }
    let axis = na.cross(&nb);
    let angle = axis.norm().atan2(na.dot(&nb));
    let tilt = |t: f64| {
        if axis.norm() > 1e-12 {
            Rotation3::from_axis_angle(&Unit::new_normalize(axis), t * angle)
        } else {
            Rotation3::identity()
        }
    };
    let u_full = tilt(1.0) * a.u;
    let mut phi = nb.dot(&u_full.cross(&ub)).atan2(u_full.dot(&ub));
    if phi > std::f64::consts::FRAC_PI_2 {
        phi -= std::f64::consts::PI;
    } else if phi <= -std::f64::consts::FRAC_PI_2 {
        phi += std::f64::consts::PI;
    }
    let ts = tilt(s);
    let n_s = ts * na;
    let u_s = Rotation3::from_axis_angle(&Unit::new_normalize(n_s), s * phi) * (ts * a.u);
    let u_s = (u_s - n_s * n_s.dot(&u_s)).normalize();
    let v_s = n_s.cross(&u_s);
    let lerp = |x: f64, y: f64| x + s * (y - x);
    Ellipse3D {
        center: a.center + (b.center - a.center) * s,
        u: u_s,
        v: v_s,
        rho_u: lerp(a.rho_u, b.rho_u),
        rho_v: lerp(a.rho_v, b.rho_v),
    }
}

#[derive(Debug, Clone)]
struct Node {
    soi: OrderedSoi,
    ellipse: Ellipse3D,
    parent: Option<usize>,
}

struct Planner<'a> {
    obstacles: &'a [Obstacle],
    cfg: &'a PlannerConfig,
    bounds: RimBounds,
    n: usize,
}

enum Connect {
    Reached(usize),
    Blocked,
}

impl Planner<'_> {
    fn free(&self, points: &[Point3]) -> bool {
        !collision_check(points, self.obstacles)
    }

    fn nearest(&self, tree: &[Node], target: &Node) -> (usize, f64) {
        // centroid distance bounds the rim distance from below
        let c = target.ellipse.center;
        let mut order: Vec<(f64, usize)> = tree
            .iter()
            .enumerate()
            .map(|(i, n)| ((n.ellipse.center - c).norm(), i))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut best = (0, f64::INFINITY);
        for (lower, i) in order {
            if lower >= best.1 {
                break;
            }
            let d = soi_distance(&tree[i].soi.points, &target.soi.points);
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }

    /// One bounded step from `from` towards `target`.
    fn extend(&self, from: &Node, target: &Ellipse3D) -> Option<(Ellipse3D, OrderedSoi)> {
        let step = self.cfg.step_size;
        let raw = |s: f64| {
            let e = interpolate_ellipse(&from.ellipse, target, s);
            let pts = e.sample_arclength(self.n);
            let a = best_alignment(&pts, &from.soi.points, true);
            (e, a.apply(&pts))
        };
        let reach = |s: f64| max_point_distance(&raw(s).1, &from.soi.points);
        let mut s = 1.0;
        if reach(1.0) > step {
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..30 {
                let mid = 0.5 * (lo + hi);
                if reach(mid) <= step {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            s = lo;
        }
        for _ in 0..4 {
            if s <= 1e-9 {
                return None;
            }
            let (guess, pts) = raw(s);
            let reg = regularize_from(&pts, &self.bounds, Some(&guess)).ok()?;
            let moved = max_point_distance(&reg.soi.points, &from.soi.points);
            if moved <= step + 0.5 * self.cfg.connect_epsilon {
                if moved < 1e-5 || !self.free(&reg.soi.points) {
                    return None;
                }
                return Some((reg.ellipse, reg.soi));
            }
            s *= 0.5;
        }
        None
    }

    /// Grows `tree` greedily towards `target` until a node is within `ε`.
    fn connect(&self, tree: &mut Vec<Node>, target: &Node, max_steps: usize) -> Connect {
        let (mut idx, mut d) = self.nearest(tree, target);
        for _ in 0..max_steps {
            if d < self.cfg.connect_epsilon {
                return Connect::Reached(idx);
            }
            match self.extend(&tree[idx], &target.ellipse) {
                Some((ellipse, soi)) => {
                    let nd = soi_distance(&soi.points, &target.soi.points);
                    if nd >= d - 1e-6 {
                        return Connect::Blocked;
                    }
                    tree.push(Node {
                        soi,
                        ellipse,
                        parent: Some(idx),
                    });
                    idx = tree.len() - 1;
                    d = nd;
                }
                None => return Connect::Blocked,
            }
        }
        if d < self.cfg.connect_epsilon {
            Connect::Reached(idx)
        } else {
            Connect::Blocked
        }
    }

    fn random_target(&self, rng: &mut ChaCha8Rng, region: &Aabb, axis: &Vec3) -> Option<Node> {
        let center = Point3::new(
            rng.random_range(region.min.x..=region.max.x),
            rng.random_range(region.min.y..=region.max.y),
            rng.random_range(region.min.z..=region.max.z),
        );
        let r = Vec3::from_fn(|_, _| StandardNormal.sample(rng)).normalize();
        let mut n = axis * self.cfg.normal_bias + r * (1.0 - self.cfg.normal_bias);
        if n.norm() < 1e-9 {
            n = r;
        }
        let n = n.normalize();
        let helper = if n.x.abs() < 0.9 {
            Vec3::x()
        } else {
            Vec3::y()
        };
        let u0 = n.cross(&helper).normalize();
        let spin = rng.random_range(0.0..std::f64::consts::TAU);
        let u = Rotation3::from_axis_angle(&Unit::new_unchecked(n), spin) * u0;
        let v = n.cross(&u);
        let ratio: f64 = rng.random_range(0.6..=1.0);
        let rho_u = self.bounds.perimeter / ramanujan2(1.0, ratio);
        let e = Ellipse3D {
            center,
            u,
            v,
            rho_u,
            rho_v: ratio * rho_u,
        };
        let mut pts = e.sample_arclength(self.n);
        if self.cfg.sample_jitter > 0.0 {
            let noise = Normal::new(0.0, self.cfg.sample_jitter).expect("finite jitter");
            for p in &mut pts {
                *p += Vec3::from_fn(|_, _| noise.sample(rng));
            }
        }
        let reg = regularize_from(&pts, &self.bounds, Some(&e)).ok()?;
        Some(Node {
            soi: reg.soi,
            ellipse: reg.ellipse,
            parent: None,
        })
    }

    fn plan(
        &self,
        start: &Node,
        goal: &Node,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<Node>, PlanningError> {
        let fail = |reason: String| PlanningError::PlanningFailed {
            segment: None,
            reason,
        };
        if !self.free(&start.soi.points) {
            return Err(fail("start state is in collision".into()));
        }
        if !self.free(&goal.soi.points) {
            return Err(fail("goal state is in collision".into()));
        }
        if soi_distance(&start.soi.points, &goal.soi.points) < self.cfg.connect_epsilon {
            return Ok(vec![start.clone()]);
        }
        let region = match &self.cfg.sample_bounds {
            Some(b) => *b,
            None => {
                let mut all = start.soi.points.clone();
                all.extend_from_slice(&goal.soi.points);
                Aabb::from_points(&all)
                    .expect("non-empty rims")
                    .padded(self.cfg.auto_bounds_padding)
            }
        };
        let travel = goal.ellipse.center - start.ellipse.center;
        let axis = if travel.norm() > 1e-9 {
            travel.normalize()
        } else {
            start.ellipse.normal()
        };

        let mut trees = [vec![start.clone()], vec![goal.clone()]];
        let greedy_steps = 4
            + (2.0 * soi_distance(&start.soi.points, &goal.soi.points) / self.cfg.step_size)
                as usize;
        if let Connect::Reached(i) = self.connect(&mut trees[0], goal, greedy_steps) {
            return Ok(self.join(&trees[0], i, &trees[1], 0));
        }
        let mut a = 0;
        for _ in 0..self.cfg.max_iterations {
            let target = match self.random_target(rng, &region, &axis) {
                Some(t) => t,
                None => continue,
            };
            let (near, _) = self.nearest(&trees[a], &target);
            if let Some((ellipse, soi)) = self.extend(&trees[a][near], &target.ellipse) {
                trees[a].push(Node {
                    soi,
                    ellipse,
                    parent: Some(near),
                });
                let new = trees[a][trees[a].len() - 1].clone();
                let b = 1 - a;
                if let Connect::Reached(j) = self.connect(&mut trees[b], &new, 500) {
                    let i = trees[a].len() - 1;
                    return Ok(if a == 0 {
                        self.join(&trees[0], i, &trees[1], j)
                    } else {
                        self.join(&trees[0], j, &trees[1], i)
                    });
                }
            }
            a = 1 - a;
        }
        Err(fail(format!(
            "no connection after {} iterations",
            self.cfg.max_iterations
        )))
    }

    /// Start root to `i` in the start tree, then `j` to the goal root.
    fn join(&self, start: &[Node], i: usize, goal: &[Node], j: usize) -> Vec<Node> {
        let mut chain = Vec::new();
        let mut k = Some(i);
        while let Some(idx) = k {
            chain.push(start[idx].clone());
            k = start[idx].parent;
        }
        chain.reverse();
        let mut k = Some(j);
        while let Some(idx) = k {
            chain.push(goal[idx].clone());
            k = goal[idx].parent;
        }
        chain
    }

    fn shortcut(&self, chain: Vec<Node>) -> Vec<Node> {
        let mut out = vec![chain[0].clone()];
        let mut i = 0;
        while i + 1 < chain.len() {
            let mut advanced = false;
            for j in ((i + 2)..chain.len()).rev() {
                let mut tree = vec![out[out.len() - 1].clone()];
                tree[0].parent = None;
                let budget = j - i - 1;
                if let Connect::Reached(k) = self.connect(&mut tree, &chain[j], budget) {
                    let mut piece = Vec::new();
                    let mut idx = Some(k);
                    while let Some(t) = idx {
                        if t != 0 {
                            piece.push(tree[t].clone());
                        }
                        idx = tree[t].parent;
                    }
                    piece.reverse();
                    if piece.len() < budget {
                        out.extend(piece);
                        out.push(chain[j].clone());
                        i = j;
                        advanced = true;
                        break;
                    }
                }
            }
            if !advanced {
                out.push(chain[i + 1].clone());
                i += 1;
            }
        }
        out
    }
}

fn anchor(
    soi: &OrderedSoi,
    bounds: &RimBounds,
    cfg: &PlannerConfig,
    what: &str,
) -> Result<Node, PlanningError> {
    let reg = regularize_from(&soi.points, bounds, None)?;
    let off = soi_distance(&reg.soi.points, &soi.points);
    if off >= cfg.connect_epsilon {
        return Err(PlanningError::InvalidConfig(format!(
            "{what} state is {off:.4} m from the nearest valid ellipse"
        )));
    }
    Ok(Node {
        soi: exact_node(&reg.ellipse, soi.len(), &soi.points),
        ellipse: reg.ellipse,
        parent: None,
    })
}

fn finish(chain: Vec<Node>) -> Vec<PathNode> {
    let mut out: Vec<PathNode> = Vec::with_capacity(chain.len());
    for (k, node) in chain.into_iter().enumerate() {
        let soi = match out.last() {
            Some(prev) => {
                let a = best_alignment(&node.soi.points, &prev.soi.points, true);
                OrderedSoi::new(a.apply(&node.soi.points), k as u64)
            }
            None => OrderedSoi::new(node.soi.points, 0),
        };
        out.push(PathNode {
            soi,
            ellipse: node.ellipse,
            parent: k.checked_sub(1),
        });
    }
    out
}

fn check_inputs(
    rims: &[&OrderedSoi],
    rim_perimeter: f64,
    cfg: &PlannerConfig,
    obstacles: &[Obstacle],
) -> Result<(), PlanningError> {
    cfg.validate()?;
    for o in obstacles {
        o.validate()?;
    }
    if !(rim_perimeter > 0.0) {
        return Err(PlanningError::InvalidConfig(
            "rim perimeter must be positive".into(),
        ));
    }
    let n = rims[0].len();
    if rims.iter().any(|r| r.len() != n) {
        return Err(PlanningError::InvalidConfig(
            "anchor states must have the same number of points".into(),
        ));
    }
    Ok(())
}

/// Path from `g_start` to `g_goal` for a rim of perimeter `rim_perimeter`.
///
/// Both anchors are first projected onto valid ellipses; the returned nodes
/// start and end at those projections.
pub fn plan_segment(
    g_start: &OrderedSoi,
    g_goal: &OrderedSoi,
    obstacles: &[Obstacle],
    rim_perimeter: f64,
    cfg: &PlannerConfig,
) -> Result<Vec<PathNode>, PlanningError> {
    check_inputs(&[g_start, g_goal], rim_perimeter, cfg, obstacles)?;
    let bounds = cfg.bounds(rim_perimeter);
    let planner = Planner {
        obstacles,
        cfg,
        bounds,
        n: g_start.len(),
    };
    let start = anchor(g_start, &bounds, cfg, "start")?;
    let goal = anchor(g_goal, &bounds, cfg, "goal")?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut chain = planner.plan(&start, &goal, &mut rng)?;
    if cfg.shortcut {
        chain = planner.shortcut(chain);
    }
    Ok(finish(chain))
}

/// Pre-bagging path `g0 → g_†` followed by the bagging path `g_† → g_*`.
pub fn plan_full(
    g0: &OrderedSoi,
    g_dag: &OrderedSoi,
    g_star: &OrderedSoi,
    obstacles: &[Obstacle],
    rim_perimeter: f64,
    cfg: &PlannerConfig,
) -> Result<BaggingPath, PlanningError> {
    check_inputs(&[g0, g_dag, g_star], rim_perimeter, cfg, obstacles)?;
    let bounds = cfg.bounds(rim_perimeter);
    let planner = Planner {
        obstacles,
        cfg,
        bounds,
        n: g0.len(),
    };
    let start = anchor(g0, &bounds, cfg, "start").map_err(|e| e.tagged(Segment::PreBagging))?;
    let junction =
        anchor(g_dag, &bounds, cfg, "bagging").map_err(|e| e.tagged(Segment::PreBagging))?;
    let goal = anchor(g_star, &bounds, cfg, "goal").map_err(|e| e.tagged(Segment::Bagging))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);

    let mut first = planner
        .plan(&start, &junction, &mut rng)
        .map_err(|e| e.tagged(Segment::PreBagging))?;
    let mut second = planner
        .plan(&junction, &goal, &mut rng)
        .map_err(|e| e.tagged(Segment::Bagging))?;
    if cfg.shortcut {
        first = planner.shortcut(first);
        second = planner.shortcut(second);
    }
    let pre_bagging = finish(first);
    // keep the junction's indexing identical on both sides
    let head = pre_bagging.last().expect("non-empty").soi.clone();
    let mut bagging = finish(second);
    let align = best_alignment(&bagging[0].soi.points, &head.points, true);
    for node in &mut bagging {
        node.soi.points = align.apply(&node.soi.points);
    }
    Ok(BaggingPath {
        pre_bagging,
        bagging,
    })
}

use nalgebra::{DMatrix, DVector};

use super::{MpcConfig, ServoError};

/// Stacked operators for `x_{k+1} = x_k + J u_k` over `t` steps:
/// `A = 1_t ⊗ I`, `B = L_t ⊗ J` with `L_t` the lower-triangular ones.
pub fn build_prediction(j: &DMatrix<f64>, t: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let (m, p) = j.shape();
    let mut a = DMatrix::zeros(m * t, m);
    let mut b = DMatrix::zeros(m * t, p * t);
    for row in 0..t {
        a.view_mut((row * m, 0), (m, m)).fill_with_identity();
        for col in 0..=row {
            b.view_mut((row * m, col * p), (m, p)).copy_from(j);
        }
    }
    (a, b)
}

/// `A x + B u`.
pub fn predict(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    x: &DVector<f64>,
    u: &DVector<f64>,
) -> DVector<f64> {
    a * x + b * u
}

struct Problem<'a> {
    b: DMatrix<f64>,
    free: DVector<f64>,
    goal: DVector<f64>,
    m: usize,
    t: usize,
    cfg: &'a MpcConfig,
    perimeter: Option<f64>,
}

fn closed_length(x: &[f64]) -> f64 {
    let n = x.len() / 3;
    (0..n)
        .map(|i| {
            let j = (i + 1) % n;
            let d = [
                x[3 * j] - x[3 * i],
                x[3 * j + 1] - x[3 * i + 1],
                x[3 * j + 2] - x[3 * i + 2],
            ];
            (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
        })
        .sum()
}

fn closed_length_grad(x: &[f64], out: &mut [f64]) {
    let n = x.len() / 3;
    for i in 0..n {
        let j = (i + 1) % n;
        let d = [
            x[3 * j] - x[3 * i],
            x[3 * j + 1] - x[3 * i + 1],
            x[3 * j + 2] - x[3 * i + 2],
        ];
        let len = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt().max(1e-300);
        for k in 0..3 {
            out[3 * i + k] -= d[k] / len;
            out[3 * j + k] += d[k] / len;
        }
    }
}

impl Problem<'_> {
    fn states(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.free + &self.b * u
    }

    fn penalty_band(&self, x: &[f64]) -> Option<(f64, f64)> {
        let r = self.perimeter?;
        let dev = closed_length(x) / r - 1.0;
        let over = dev.abs() - self.cfg.perimeter_band;
        (over > 0.0).then_some((over, dev.signum() / r))
    }

    fn cost(&self, u: &DVector<f64>) -> f64 {
        let x = self.states(u);
        let e = &x - &self.goal;
        let mut c = self.cfg.q_weight * e.norm_squared() + self.cfg.r_weight * u.norm_squared();
        if self.perimeter.is_some() {
            for k in 0..self.t {
                if let Some((over, _)) =
                    self.penalty_band(&x.as_slice()[k * self.m..(k + 1) * self.m])
                {
                    c += self.cfg.perimeter_weight * over * over;
                }
            }
        }
        c
    }

    fn gradient(&self, u: &DVector<f64>) -> DVector<f64> {
        let x = self.states(u);
        let mut gx = (&x - &self.goal) * (2.0 * self.cfg.q_weight);
        if self.perimeter.is_some() {
            for k in 0..self.t {
                let range = k * self.m..(k + 1) * self.m;
                if let Some((over, scale)) = self.penalty_band(&x.as_slice()[range.clone()]) {
                    let mut g = vec![0.0; self.m];
                    closed_length_grad(&x.as_slice()[range.clone()], &mut g);
                    let w = 2.0 * self.cfg.perimeter_weight * over * scale;
                    for (dst, v) in gx.as_mut_slice()[range].iter_mut().zip(g) {
                        *dst += w * v;
                    }
                }
            }
        }
        self.b.transpose() * gx + u * (2.0 * self.cfg.r_weight)
    }
}

fn clip(u: &mut DVector<f64>, bound: &DVector<f64>) {
    for (x, b) in u.iter_mut().zip(bound.iter()) {
        *x = x.clamp(-b, *b);
    }
}

/// First command of the receding-horizon solution driving `x` towards
/// `goal` under the model `J`.
///
/// `x` and `goal` are stacked rim coordinates in the same index order. The
/// box is handled by clipping and re-solving on the free components, then a
/// projected-gradient pass that also sees the perimeter penalty.
pub fn mpc_step(
    x: &DVector<f64>,
    goal: &DVector<f64>,
    j: &DMatrix<f64>,
    cfg: &MpcConfig,
) -> Result<DVector<f64>, ServoError> {
    let (m, p) = j.shape();
    if x.len() != m || goal.len() != m {
        return Err(ServoError::DimensionMismatch(format!(
            "state has {} entries, goal {}, Jacobian {m} rows",
            x.len(),
            goal.len()
        )));
    }
    if cfg.u_max.len() != p {
        return Err(ServoError::DimensionMismatch(format!(
            "u_max has {} entries, Jacobian {p} columns",
            cfg.u_max.len()
        )));
    }
    if !j.iter().all(|v| v.is_finite()) || !x.iter().all(|v| v.is_finite()) {
        return Err(ServoError::SolverFailure(
            "non-finite model or state".into(),
        ));
    }
    let t = cfg.horizon;
    let (a, b) = build_prediction(j, t);
    let stacked_goal = DVector::from_iterator(m * t, (0..t).flat_map(|_| goal.iter().copied()));
    let perimeter = if cfg.perimeter_weight > 0.0 && m % 3 == 0 && m >= 9 {
        Some(
            cfg.perimeter_reference
                .unwrap_or_else(|| closed_length(goal.as_slice())),
        )
    } else {
        None
    };
    let prob = Problem {
        free: &a * x,
        b,
        goal: stacked_goal,
        m,
        t,
        cfg,
        perimeter,
    };
    let bound = DVector::from_iterator(p * t, (0..t).flat_map(|_| cfg.u_max.iter().copied()));

    // normal equations of the quadratic part
    let h = prob.b.transpose() * &prob.b * cfg.q_weight
        + DMatrix::identity(p * t, p * t) * cfg.r_weight;
    let f = prob.b.transpose() * (&prob.goal - &prob.free) * cfg.q_weight;

    let mut fixed = vec![false; p * t];
    let mut u = DVector::zeros(p * t);
    for _ in 0..5 {
        let idx: Vec<usize> = (0..p * t).filter(|&i| !fixed[i]).collect();
        if idx.is_empty() {
            break;
        }
        let mut rhs = DVector::from_iterator(idx.len(), idx.iter().map(|&i| f[i]));
        for (r, &i) in idx.iter().enumerate() {
            for k in 0..p * t {
                if fixed[k] {
                    rhs[r] -= h[(i, k)] * u[k];
                }
            }
        }
        let hs = DMatrix::from_fn(idx.len(), idx.len(), |r, c| h[(idx[r], idx[c])]);
        let sol = hs
            .cholesky()
            .ok_or_else(|| {
                ServoError::SolverFailure("input weight is not positive definite".into())
            })?
            .solve(&rhs);
        let mut changed = false;
        for (r, &i) in idx.iter().enumerate() {
            u[i] = sol[r];
            if u[i].abs() > bound[i] {
                u[i] = u[i].clamp(-bound[i], bound[i]);
                fixed[i] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    clip(&mut u, &bound);

    // projected gradient on the full cost, step from the quadratic's
    // curvature bound
    let lipschitz = 2.0
        * h.row_iter()
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
    let mut cost = prob.cost(&u);
    let mut step = 1.0 / lipschitz.max(1e-300);
    for _ in 0..cfg.polish_iterations {
        let g = prob.gradient(&u);
        let mut improved = false;
        let mut s = step;
        for _ in 0..30 {
            let mut trial = &u - &g * s;
            clip(&mut trial, &bound);
            let c = prob.cost(&trial);
            if c < cost {
                u = trial;
                cost = c;
                improved = true;
                step = (2.0 * s).min(1e3 / lipschitz.max(1e-300));
                break;
            }
            s *= 0.5;
        }
        if !improved {
            break;
        }
    }

    let zero = DVector::zeros(p * t);
    let base = prob.cost(&zero);
    if !cost.is_finite() {
        return Err(ServoError::SolverFailure("cost is not finite".into()));
    }
    if cost > base {
        u = zero;
    }
    Ok(u.rows(0, p).into_owned())
}

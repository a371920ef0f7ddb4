//! Derivative-free local minimization (Nelder-Mead with dimension-adaptive
//! coefficients).

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMead {
    pub max_evals: usize,
    /// Stop once the simplex spread in every coordinate is below this.
    pub xtol: f64,
    /// ...and the spread of function values is below this.
    pub ftol: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self {
            max_evals: 4000,
            xtol: 1e-10,
            ftol: 1e-14,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
}

impl NelderMead {
    /// Minimizes `f` from `x0`, with the initial simplex spanned by `steps`.
    pub fn minimize<F>(&self, mut f: F, x0: &[f64], steps: &[f64]) -> Minimum
    where
        F: FnMut(&[f64]) -> f64,
    {
        let n = x0.len();
        assert_eq!(n, steps.len(), "one step per coordinate");
        let nf = n as f64;
        let (alpha, gamma, rho, sigma) = if n >= 2 {
            (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf)
        } else {
            (1.0, 2.0, 0.5, 0.5)
        };

        let mut evals = 0usize;
        let mut eval = |x: &[f64], evals: &mut usize| {
            *evals += 1;
            let v = f(x);
            if v.is_nan() {
                f64::INFINITY
            } else {
                v
            }
        };

        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
        let f0 = eval(x0, &mut evals);
        simplex.push((x0.to_vec(), f0));
        for i in 0..n {
            let mut x = x0.to_vec();
            x[i] += steps[i];
            let fx = eval(&x, &mut evals);
            simplex.push((x, fx));
        }

        let mut centroid = vec![0.0; n];
        let mut trial = vec![0.0; n];
        while evals < self.max_evals {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let f_spread = simplex[n].1 - simplex[0].1;
            let x_spread = (0..n)
                .map(|j| {
                    simplex
                        .iter()
                        .map(|(x, _)| (x[j] - simplex[0].0[j]).abs())
                        .fold(0.0, f64::max)
                })
                .fold(0.0, f64::max);
            if x_spread <= self.xtol || (f_spread <= self.ftol && x_spread <= 1e3 * self.xtol) {
                break;
            }

            centroid.iter_mut().for_each(|c| *c = 0.0);
            for (x, _) in &simplex[..n] {
                for j in 0..n {
                    centroid[j] += x[j] / nf;
                }
            }
            let worst = simplex[n].clone();
            let along = |t: f64, out: &mut Vec<f64>| {
                for j in 0..n {
                    out[j] = centroid[j] + t * (worst.0[j] - centroid[j]);
                }
            };

            along(-alpha, &mut trial);
            let fr = eval(&trial, &mut evals);
            if fr < simplex[0].1 {
                let reflected = trial.clone();
                along(-alpha * gamma, &mut trial);
                let fe = eval(&trial, &mut evals);
                simplex[n] = if fe < fr {
                    (trial.clone(), fe)
                } else {
                    (reflected, fr)
                };
                continue;
            }
            if fr < simplex[n - 1].1 {
                simplex[n] = (trial.clone(), fr);
                continue;
            }
            let (t, bound) = if fr < worst.1 {
                (-alpha * rho, fr)
            } else {
                (rho, worst.1)
            };
            along(t, &mut trial);
            let fc = eval(&trial, &mut evals);
            if fc <= bound {
                simplex[n] = (trial.clone(), fc);
                continue;
            }
            let best = simplex[0].0.clone();
            for item in simplex.iter_mut().skip(1) {
                for j in 0..n {
                    item.0[j] = best[j] + sigma * (item.0[j] - best[j]);
                }
                item.1 = eval(&item.0, &mut evals);
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (x, f) = simplex.swap_remove(0);
        Minimum { x, f, evals }
    }
}

//! Rim extraction: a Gaussian mixture with one uniform outlier component,
//! fitted by EM, whose means become the ordered rim.

use nalgebra::{Cholesky, Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{farthest_point_sampling_indices, Aabb, Point3, PointCloud, Vec3};
use crate::soi::{best_alignment, order_rim, OrderedSoi, SoiError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExtractionError {
    #[error("cloud has {got} points, need at least {needed}")]
    InsufficientPoints { needed: usize, got: usize },
    #[error("invalid extraction config: {0}")]
    InvalidConfig(String),
    #[error("warm start has {got} points, config expects {expected}")]
    WarmStartMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Rim(#[from] SoiError),
}

/// Lower bound on the re-estimated outlier weight.
pub const OUTLIER_WEIGHT_FLOOR: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GmmConfig {
    pub n_x: usize,
    /// Initial weight of the uniform component.
    pub outlier_weight: f64,
    pub max_iters: usize,
    pub loglik_rel_tol: f64,
    /// Minimum covariance eigenvalue (m²).
    pub covariance_floor: f64,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self {
            n_x: 32,
            outlier_weight: 0.05,
            max_iters: 100,
            loglik_rel_tol: 1e-6,
            covariance_floor: 1e-6,
        }
    }
}

impl GmmConfig {
    pub fn validate(&self) -> Result<(), ExtractionError> {
        let bad = |m: &str| Err(ExtractionError::InvalidConfig(m.to_string()));
        if self.n_x < 1 {
            return bad("n_x must be at least 1");
        }
        if !(0.0..1.0).contains(&self.outlier_weight) {
            return bad("outlier_weight must be in [0,1)");
        }
        if !(self.loglik_rel_tol > 0.0) {
            return bad("loglik_rel_tol must be positive");
        }
        if !(self.covariance_floor > 0.0) {
            return bad("covariance_floor must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    /// Gaussian weights; together with `outlier_weight` they sum to one.
    pub weights: Vec<f64>,
    pub outlier_weight: f64,
    pub means: Vec<Point3>,
    pub covariances: Vec<Matrix3<f64>>,
    /// Density of the uniform component (1 / support volume).
    pub uniform_density: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Log-likelihood before the first M-step and after each one.
    pub loglik_history: Vec<f64>,
}

impl GmmModel {
    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum::<f64>() + self.outlier_weight
    }
}

const LN_2PI: f64 = 1.837_877_066_409_345_3;

struct Component {
    mean: Point3,
    chol_inv: Matrix3<f64>,
    log_norm: f64,
}

impl Component {
    fn new(mean: Point3, cov: &Matrix3<f64>) -> Self {
        let chol = Cholesky::new(*cov).expect("floored covariance is SPD");
        let l = chol.l();
        let log_det = 2.0 * (0..3).map(|i| l[(i, i)].ln()).sum::<f64>();
        let chol_inv = l
            .try_inverse()
            .expect("triangular factor with positive diagonal");
        Self {
            mean,
            chol_inv,
            log_norm: -0.5 * (3.0 * LN_2PI + log_det),
        }
    }

    fn log_pdf(&self, p: &Point3) -> f64 {
        let z = self.chol_inv * (p - self.mean);
        self.log_norm - 0.5 * z.norm_squared()
    }
}

fn floor_covariance(cov: &Matrix3<f64>, floor: f64) -> Matrix3<f64> {
    let sym = 0.5 * (cov + cov.transpose());
    let eig = SymmetricEigen::new(sym);
    let vals = eig.eigenvalues.map(|v| v.max(floor));
    let q = eig.eigenvectors;
    let out = q * Matrix3::from_diagonal(&vals) * q.transpose();
    0.5 * (out + out.transpose())
}

/// Uniform-component support: the cloud's bounding box grown by 5% per axis,
/// with every side at least 1 cm.
pub fn uniform_support(points: &[Point3]) -> Aabb {
    Aabb::from_points(points)
        .expect("non-empty cloud")
        .inflated(0.05, 0.01)
}

/// Cold-start means: FPS over a cleaned copy of the cloud.
///
/// Sparse points (distance to the k-th neighbour above twice the median) are
/// dropped, and each remaining point is replaced by the centroid of its k
/// nearest dense neighbours. Max-min selection on the raw cloud would pick
/// isolated outliers first and seed both edges of a noisy rim band.
pub fn cold_start_means(points: &[Point3], n_x: usize) -> Vec<Point3> {
    let n = points.len();
    let k = KNN.min(n.saturating_sub(1));
    let mut candidates: Vec<Point3> = points.to_vec();
    if k >= 1 && n > 4 * n_x {
        let kth: Vec<f64> = points
            .iter()
            .map(|p| {
                let mut d: Vec<f64> = points.iter().map(|q| (p - q).norm_squared()).collect();
                d.select_nth_unstable_by(k, |a, b| a.total_cmp(b));
                d[k]
            })
            .collect();
        let mut sorted = kth.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let median = sorted[n / 2];
        // squared distances, so the factor is 2²
        let dense: Vec<Point3> = points
            .iter()
            .zip(&kth)
            .filter(|(_, &d)| d <= 4.0 * median)
            .map(|(p, _)| *p)
            .collect();
        if dense.len() > 4 * n_x {
            candidates = smooth(&dense, KNN.min(dense.len() - 1));
        }
    }
    farthest_point_sampling_indices(&candidates, n_x, 0)
        .expect("n_x <= candidate count")
        .into_iter()
        .map(|i| candidates[i])
        .collect()
}

const KNN: usize = 10;

fn smooth(points: &[Point3], k: usize) -> Vec<Point3> {
    let mut idx: Vec<usize> = (0..points.len()).collect();
    points
        .iter()
        .map(|p| {
            idx.select_nth_unstable_by(k, |&a, &b| {
                (points[a] - p)
                    .norm_squared()
                    .total_cmp(&(points[b] - p).norm_squared())
            });
            let sum = idx[..=k]
                .iter()
                .fold(Vec3::zeros(), |acc, &i| acc + points[i].coords);
            Point3::from(sum / (k + 1) as f64)
        })
        .collect()
}

fn initial_variance(means: &[Point3], floor: f64) -> f64 {
    if means.len() < 2 {
        return floor;
    }
    let spacing = means
        .iter()
        .enumerate()
        .map(|(i, p)| {
            means
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, q)| (p - q).norm())
                .fold(f64::INFINITY, f64::min)
        })
        .sum::<f64>()
        / means.len() as f64;
    (0.5 * spacing).powi(2).max(floor)
}

/// Fits the mixture by EM. `init` warm-starts the means.
pub fn fit_gmm(
    cloud: &PointCloud,
    cfg: &GmmConfig,
    init: Option<&OrderedSoi>,
) -> Result<GmmModel, ExtractionError> {
    cfg.validate()?;
    let pts = cloud.points();
    let n = pts.len();
    let k = cfg.n_x;
    if n < k {
        return Err(ExtractionError::InsufficientPoints { needed: k, got: n });
    }
    let means = match init {
        Some(soi) if soi.len() != k => {
            return Err(ExtractionError::WarmStartMismatch {
                expected: k,
                got: soi.len(),
            })
        }
        Some(soi) => soi.points.clone(),
        None => cold_start_means(pts, k),
    };
    let var0 = initial_variance(&means, cfg.covariance_floor);
    let covs = vec![Matrix3::identity() * var0; k];
    let weights = vec![(1.0 - cfg.outlier_weight) / k as f64; k];
    Ok(run_em(pts, cfg, means, covs, weights, cfg.outlier_weight))
}

/// Continues EM on a new cloud from every parameter of `prev`.
pub fn refit_gmm(
    cloud: &PointCloud,
    cfg: &GmmConfig,
    prev: &GmmModel,
) -> Result<GmmModel, ExtractionError> {
    cfg.validate()?;
    let k = cfg.n_x;
    if prev.means.len() != k {
        return Err(ExtractionError::WarmStartMismatch {
            expected: k,
            got: prev.means.len(),
        });
    }
    if cloud.len() < k {
        return Err(ExtractionError::InsufficientPoints {
            needed: k,
            got: cloud.len(),
        });
    }
    let w_out = if cfg.outlier_weight == 0.0 {
        0.0
    } else {
        prev.outlier_weight.max(OUTLIER_WEIGHT_FLOOR)
    };
    let mass: f64 = prev.weights.iter().sum();
    let weights = prev
        .weights
        .iter()
        .map(|w| (1.0 - w_out) * w / mass)
        .collect();
    Ok(run_em(
        cloud.points(),
        cfg,
        prev.means.clone(),
        prev.covariances.clone(),
        weights,
        w_out,
    ))
}

fn run_em(
    pts: &[Point3],
    cfg: &GmmConfig,
    mut means: Vec<Point3>,
    mut covs: Vec<Matrix3<f64>>,
    mut weights: Vec<f64>,
    mut w_out: f64,
) -> GmmModel {
    let n = pts.len();
    let k = means.len();
    let log_u = -uniform_support(pts).volume().ln();

    let mut resp = vec![0.0; n * (k + 1)];
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    loop {
        // E-step
        let comps: Vec<Component> = means
            .iter()
            .zip(&covs)
            .map(|(m, c)| Component::new(*m, c))
            .collect();
        let log_w: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
        let log_out = if w_out > 0.0 {
            w_out.ln() + log_u
        } else {
            f64::NEG_INFINITY
        };
        let mut ll = 0.0;
        for (i, p) in pts.iter().enumerate() {
            let row = &mut resp[i * (k + 1)..(i + 1) * (k + 1)];
            let mut mx = log_out;
            for j in 0..k {
                row[j] = log_w[j] + comps[j].log_pdf(p);
                mx = mx.max(row[j]);
            }
            row[k] = log_out;
            let mut s = 0.0;
            for r in row.iter_mut() {
                *r = (*r - mx).exp();
                s += *r;
            }
            for r in row.iter_mut() {
                *r /= s;
            }
            ll += mx + s.ln();
        }
        if let Some(&prev) = history.last() {
            let prev: f64 = prev;
            if ((ll - prev) / prev.abs().max(1e-300)).abs() < cfg.loglik_rel_tol {
                history.push(ll);
                converged = true;
                break;
            }
        }
        history.push(ll);
        if iterations >= cfg.max_iters {
            break;
        }
        iterations += 1;

        // M-step
        let mut nk = vec![0.0; k + 1];
        let mut sums = vec![Vec3::zeros(); k];
        for (i, p) in pts.iter().enumerate() {
            let row = &resp[i * (k + 1)..(i + 1) * (k + 1)];
            for j in 0..k {
                nk[j] += row[j];
                sums[j] += row[j] * p.coords;
            }
            nk[k] += row[k];
        }
        let mut scatter = vec![Matrix3::zeros(); k];
        let new_means: Vec<Option<Point3>> = (0..k)
            .map(|j| (nk[j] > 1e-12).then(|| Point3::from(sums[j] / nk[j])))
            .collect();
        for (i, p) in pts.iter().enumerate() {
            let row = &resp[i * (k + 1)..(i + 1) * (k + 1)];
            for j in 0..k {
                if let Some(m) = new_means[j] {
                    let d = p - m;
                    scatter[j] += row[j] * d * d.transpose();
                }
            }
        }
        for j in 0..k {
            if let Some(m) = new_means[j] {
                means[j] = m;
                covs[j] = floor_covariance(&(scatter[j] / nk[j]), cfg.covariance_floor);
            }
        }
        let total: f64 = nk.iter().sum();
        let gauss_mass: f64 = nk[..k].iter().sum();
        if cfg.outlier_weight == 0.0 {
            w_out = 0.0;
            for j in 0..k {
                weights[j] = (nk[j] / gauss_mass).max(1e-300);
            }
        } else {
            w_out = (nk[k] / total).max(OUTLIER_WEIGHT_FLOOR);
            for j in 0..k {
                weights[j] = ((1.0 - w_out) * nk[j] / gauss_mass).max(1e-300);
            }
        }
        let s: f64 = weights.iter().sum::<f64>() + w_out;
        weights.iter_mut().for_each(|w| *w /= s);
        w_out /= s;
    }

    GmmModel {
        weights,
        outlier_weight: w_out,
        means,
        covariances: covs,
        uniform_density: log_u.exp(),
        converged,
        iterations,
        loglik_history: history,
    }
}

/// Fits the mixture and orders its means into a rim. With `prev`, EM is
/// warm-started from it and the result is re-indexed to match it.
pub fn extract_soi(
    cloud: &PointCloud,
    cfg: &GmmConfig,
    prev: Option<&OrderedSoi>,
) -> Result<OrderedSoi, ExtractionError> {
    extract_with_model(cloud, cfg, prev).map(|(soi, _)| soi)
}

/// As [`extract_soi`], also returning the fitted model.
pub fn extract_with_model(
    cloud: &PointCloud,
    cfg: &GmmConfig,
    prev: Option<&OrderedSoi>,
) -> Result<(OrderedSoi, GmmModel), ExtractionError> {
    if cfg.n_x < 3 {
        return Err(ExtractionError::InvalidConfig(
            "n_x must be at least 3 to form a rim".into(),
        ));
    }
    let model = fit_gmm(cloud, cfg, prev)?;
    let timestamp = prev.map_or(0, |p| p.timestamp + 1);
    let mut soi = order_rim(&model.means, timestamp)?;
    if let Some(p) = prev {
        let a = best_alignment(&soi.points, &p.points, true);
        soi.points = a.apply(&soi.points);
    }
    Ok((soi, model))
}

/// Extraction across consecutive clouds, warm-starting each fit from the
/// full previous model rather than from its means alone.
#[derive(Debug, Clone)]
pub struct RimTracker {
    cfg: GmmConfig,
    last: Option<(OrderedSoi, GmmModel)>,
}

impl RimTracker {
    pub fn new(cfg: GmmConfig) -> Self {
        Self { cfg, last: None }
    }

    pub fn config(&self) -> &GmmConfig {
        &self.cfg
    }

    pub fn current(&self) -> Option<&OrderedSoi> {
        self.last.as_ref().map(|(s, _)| s)
    }

    pub fn model(&self) -> Option<&GmmModel> {
        self.last.as_ref().map(|(_, m)| m)
    }

    pub fn reset(&mut self) {
        self.last = None;
    }

    pub fn update(&mut self, cloud: &PointCloud) -> Result<OrderedSoi, ExtractionError> {
        let (soi, model) = match self.last.take() {
            None => extract_with_model(cloud, &self.cfg, None)?,
            Some((prev, prev_model)) => {
                let model = refit_gmm(cloud, &self.cfg, &prev_model)?;
                let mut soi = order_rim(&model.means, prev.timestamp + 1)?;
                soi.points = best_alignment(&soi.points, &prev.points, true).apply(&soi.points);
                (soi, model)
            }
        };
        self.last = Some((soi.clone(), model));
        Ok(soi)
    }
}

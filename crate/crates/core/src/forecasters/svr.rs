//! ε-insensitive support vector regression with an RBF kernel.
//!
//! The dual is solved in the doubled-variable form
//!
//! ```text
//! min ½ αᵀQα + pᵀα   s.t.  yᵀα = 0,  0 ≤ α_t ≤ C
//! ```
//!
//! with `α = (α, α*)`, `y = (+1…, −1…)`, `p = (ε − z, ε + z)` and
//! `Q_st = y_s y_t K(x_s, x_t)`, by pairwise coordinate steps using
//! second-order working-set selection. The regression coefficients are
//! `β_i = α_i − α*_i`.

use std::collections::VecDeque;
use std::rc::Rc;
use std::time::Instant;

use crate::error::{Error, Result};

/// Kernel bandwidth choice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    /// Median pairwise distance of the standardized training features.
    Auto,
    Fixed(f64),
}

impl std::fmt::Display for Bandwidth {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Bandwidth::Auto => f.write_str("auto"),
            Bandwidth::Fixed(s) => write!(f, "{s}"),
        }
    }
}

impl std::str::FromStr for Bandwidth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(Bandwidth::Auto);
        }
        s.parse::<f64>()
            .map(Bandwidth::Fixed)
            .map_err(|_| Error::Config(format!("sigma must be `auto` or a number, got {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvrParams {
    pub c: f64,
    /// Tube half-width, in standardized target units.
    pub epsilon: f64,
    pub sigma: Bandwidth,
    /// Stop when the maximal KKT violation drops below this.
    pub tolerance: f64,
    /// Iteration cap; `None` means `max(10_000_000, 100·n)`.
    pub max_iter: Option<usize>,
    /// Training rows beyond this are thinned uniformly.
    pub max_train_rows: usize,
}

impl Default for SvrParams {
    fn default() -> Self {
        SvrParams {
            c: 1.0,
            epsilon: 0.1,
            sigma: Bandwidth::Auto,
            tolerance: 1e-3,
            max_iter: None,
            max_train_rows: 5000,
        }
    }
}

/// Rows used for the median heuristic.
const BANDWIDTH_SAMPLE: usize = 1000;
const TAU: f64 = 1e-12;
const CACHE_BYTES: usize = 64 << 20;

/// Mean/standard deviation used to standardize one column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaling {
    pub mean: f64,
    pub std: f64,
}

impl Scaling {
    pub const IDENTITY: Scaling = Scaling { mean: 0.0, std: 1.0 };

    fn fit(values: impl Iterator<Item = f64> + Clone) -> Scaling {
        let n = values.clone().count() as f64;
        let mean = values.clone().sum::<f64>() / n;
        let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        // constant columns only get centered
        let std = if std > 1e-12 * mean.abs().max(1.0) { std } else { 1.0 };
        Scaling { mean, std }
    }

    pub fn apply(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    pub fn invert(&self, v: f64) -> f64 {
        v * self.std + self.mean
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvrModel {
    /// β_i = α_i − α*_i per stored row, in standardized target units.
    pub coefficients: Vec<f64>,
    /// Bias in standardized target units.
    pub bias: f64,
    pub sigma: f64,
    pub c: f64,
    pub epsilon: f64,
    /// Standardized training rows.
    pub support_vectors: Vec<Vec<f64>>,
    pub feature_scaling: Vec<Scaling>,
    pub target_scaling: Scaling,
    pub iterations: usize,
    pub kkt_violation: f64,
}

pub fn rbf(a: &[f64], b: &[f64], sigma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-d2 / (2.0 * sigma * sigma)).exp()
}

/// Median pairwise Euclidean distance.
pub fn median_pairwise_distance(rows: &[Vec<f64>]) -> f64 {
    let mut d = Vec::with_capacity(rows.len() * rows.len().saturating_sub(1) / 2);
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            let s: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            d.push(s.sqrt());
        }
    }
    if d.is_empty() {
        return 0.0;
    }
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    let upper = *m;
    if d.len() % 2 == 1 {
        upper
    } else {
        let lower = d[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lower + upper) / 2.0
    }
}

/// Evenly spaced indices `⌊i·n/k⌋`, `i < k`.
pub fn thin_indices(n: usize, k: usize) -> Vec<usize> {
    if n <= k {
        (0..n).collect()
    } else {
        (0..k).map(|i| i * n / k).collect()
    }
}

/// Bounded FIFO cache of kernel rows.
struct KernelCache<'a> {
    rows: &'a [Vec<f64>],
    sigma: f64,
    slots: Vec<Option<Rc<Vec<f64>>>>,
    order: VecDeque<usize>,
    capacity: usize,
}

impl<'a> KernelCache<'a> {
    fn new(rows: &'a [Vec<f64>], sigma: f64) -> Self {
        let n = rows.len().max(1);
        let capacity = (CACHE_BYTES / (n * 8)).clamp(2, n);
        KernelCache {
            rows,
            sigma,
            slots: vec![None; rows.len()],
            order: VecDeque::new(),
            capacity,
        }
    }

    fn row(&mut self, i: usize) -> Rc<Vec<f64>> {
        if let Some(r) = &self.slots[i] {
            return Rc::clone(r);
        }
        let xi = &self.rows[i];
        let r: Rc<Vec<f64>> = Rc::new(self.rows.iter().map(|xj| rbf(xi, xj, self.sigma)).collect());
        if self.order.len() == self.capacity {
            if let Some(old) = self.order.pop_front() {
                self.slots[old] = None;
            }
        }
        self.order.push_back(i);
        self.slots[i] = Some(Rc::clone(&r));
        r
    }
}

/// Solution of the ε-SVR dual.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub beta: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub violation: f64,
}

/// Solves the ε-SVR dual for standardized rows `x` and targets `z`.
pub fn solve_dual(
    x: &[Vec<f64>],
    z: &[f64],
    sigma: f64,
    params: &SvrParams,
    deadline: Option<Instant>,
) -> Result<DualSolution> {
    let n = x.len();
    let l = 2 * n;
    let c = params.c;
    let eps = params.epsilon;
    let max_iter = params.max_iter.unwrap_or_else(|| 10_000_000usize.max(100 * n));
    let started = Instant::now();

    let sign = |t: usize| if t < n { 1.0 } else { -1.0 };
    let base = |t: usize| if t < n { t } else { t - n };

    let mut alpha = vec![0.0f64; l];
    let mut grad: Vec<f64> = (0..l)
        .map(|t| if t < n { eps - z[t] } else { eps + z[t - n] })
        .collect();
    // RBF kernel has unit diagonal
    let qd = 1.0;
    let mut cache = KernelCache::new(x, sigma);

    let is_up = |a: f64, y: f64| if y > 0.0 { a < c } else { a > 0.0 };
    let is_low = |a: f64, y: f64| if y > 0.0 { a > 0.0 } else { a < c };

    let mut iter = 0usize;
    let violation = loop {
        // first index: max −y·G over I_up
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..l {
            let y = sign(t);
            if is_up(alpha[t], y) {
                let v = -y * grad[t];
                if v >= gmax {
                    gmax = v;
                    i_sel = Some(t);
                }
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = None;
        let mut obj_min = f64::INFINITY;
        let ki = i_sel.map(|i| cache.row(base(i)));
        for t in 0..l {
            let y = sign(t);
            if !is_low(alpha[t], y) {
                continue;
            }
            let yg = y * grad[t];
            if yg >= gmax2 {
                gmax2 = yg;
            }
            if let Some(ki) = ki.as_ref() {
                let b = gmax + yg;
                if b > 0.0 {
                    // Q_ii + Q_tt − 2 y_i y_t Q_it = K_ii + K_tt − 2 K_it
                    let mut a = 2.0 * qd - 2.0 * ki[base(t)];
                    if a <= 0.0 {
                        a = TAU;
                    }
                    let obj = -(b * b) / a;
                    if obj <= obj_min {
                        obj_min = obj;
                        j_sel = Some(t);
                    }
                }
            }
        }
        let gap = gmax + gmax2;
        let (i, j) = match (i_sel, j_sel) {
            (Some(i), Some(j)) if gap >= params.tolerance => (i, j),
            _ => break gap.max(0.0),
        };
        if iter >= max_iter {
            return Err(Error::NotConverged {
                iterations: iter,
                violation: gap,
            });
        }
        if iter % 1024 == 0 {
            if let Some(d) = deadline {
                if Instant::now() >= d {
                    return Err(Error::Timeout {
                        elapsed_ms: started.elapsed().as_millis(),
                    });
                }
            }
        }
        iter += 1;

        let ki = cache.row(base(i));
        let kj = cache.row(base(j));
        let (yi, yj) = (sign(i), sign(j));
        let q_ij = yi * yj * ki[base(j)];
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if yi != yj {
            let mut quad = 2.0 * qd + 2.0 * q_ij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = 2.0 * qd - 2.0 * q_ij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let di = alpha[i] - old_i;
        let dj = alpha[j] - old_j;
        for t in 0..l {
            let yt = sign(t);
            let bt = base(t);
            grad[t] += yt * (yi * ki[bt] * di + yj * kj[bt] * dj);
        }
    };

    // bias from free variables, else the midpoint of the feasible interval
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut free_sum = 0.0;
    let mut free_n = 0usize;
    for t in 0..l {
        let y = sign(t);
        let yg = y * grad[t];
        if alpha[t] >= c {
            if y < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free_n += 1;
            free_sum += yg;
        }
    }
    let rho = if free_n > 0 {
        free_sum / free_n as f64
    } else {
        (ub + lb) / 2.0
    };
    let beta = (0..n).map(|i| alpha[i] - alpha[i + n]).collect();
    Ok(DualSolution {
        beta,
        bias: -rho,
        iterations: iter,
        violation,
    })
}

/// Standardizes `rows`/`targets`, picks the bandwidth and solves the dual.
pub fn svr_fit(
    rows: &[Vec<f64>],
    targets: &[f64],
    params: &SvrParams,
    deadline: Option<Instant>,
) -> Result<SvrModel> {
    if rows.len() != targets.len() {
        return Err(Error::Model(format!(
            "{} feature rows but {} targets",
            rows.len(),
            targets.len()
        )));
    }
    if rows.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "SVR needs at least 2 training rows, got {}",
            rows.len()
        )));
    }
    if !(params.c > 0.0) || !(params.epsilon >= 0.0) {
        return Err(Error::Config(format!(
            "SVR needs C > 0 and epsilon >= 0 (C = {}, epsilon = {})",
            params.c, params.epsilon
        )));
    }
    let width = rows[0].len();
    if rows.iter().any(|r| r.len() != width) {
        return Err(Error::Model("ragged feature rows".into()));
    }
    let keep = thin_indices(rows.len(), params.max_train_rows.max(2));
    let rows: Vec<&Vec<f64>> = keep.iter().map(|&i| &rows[i]).collect();
    let targets: Vec<f64> = keep.iter().map(|&i| targets[i]).collect();

    let feature_scaling: Vec<Scaling> = (0..width)
        .map(|k| Scaling::fit(rows.iter().map(move |r| r[k])))
        .collect();
    let target_scaling = Scaling::fit(targets.iter().copied());
    let x: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().zip(&feature_scaling).map(|(v, s)| s.apply(*v)).collect())
        .collect();
    let z: Vec<f64> = targets.iter().map(|v| target_scaling.apply(*v)).collect();

    let sigma = match params.sigma {
        Bandwidth::Fixed(s) if s > 0.0 && s.is_finite() => s,
        Bandwidth::Fixed(s) => return Err(Error::Degenerate(format!("kernel bandwidth {s} must be positive"))),
        Bandwidth::Auto => {
            let sample: Vec<Vec<f64>> = thin_indices(x.len(), BANDWIDTH_SAMPLE)
                .into_iter()
                .map(|i| x[i].clone())
                .collect();
            let s = median_pairwise_distance(&sample);
            if !(s > 0.0) {
                return Err(Error::Degenerate(
                    "median pairwise distance is zero (training rows identical)".into(),
                ));
            }
            s
        }
    };

    let sol = solve_dual(&x, &z, sigma, params, deadline)?;
    Ok(SvrModel {
        coefficients: sol.beta,
        bias: sol.bias,
        sigma,
        c: params.c,
        epsilon: params.epsilon,
        support_vectors: x,
        feature_scaling,
        target_scaling,
        iterations: sol.iterations,
        kkt_violation: sol.violation,
    })
}

impl SvrModel {
    /// A model over already-standardized rows with identity target scaling.
    pub fn from_parts(support_vectors: Vec<Vec<f64>>, coefficients: Vec<f64>, bias: f64, sigma: f64) -> Self {
        let width = support_vectors.first().map_or(0, Vec::len);
        SvrModel {
            c: coefficients.iter().fold(0.0f64, |m, b| m.max(b.abs())),
            coefficients,
            bias,
            sigma,
            epsilon: 0.0,
            support_vectors,
            feature_scaling: vec![Scaling::IDENTITY; width],
            target_scaling: Scaling::IDENTITY,
            iterations: 0,
            kkt_violation: 0.0,
        }
    }

    pub fn width(&self) -> usize {
        self.feature_scaling.len()
    }

    /// Decision value on a standardized row, in standardized target units.
    pub fn decision(&self, z: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.coefficients)
            .filter(|(_, b)| **b != 0.0)
            .map(|(sv, b)| b * rbf(sv, z, self.sigma))
            .sum::<f64>()
            + self.bias
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.width() {
            return Err(Error::Model(format!(
                "feature row has width {}, model expects {}",
                x.len(),
                self.width()
            )));
        }
        let z: Vec<f64> = x.iter().zip(&self.feature_scaling).map(|(v, s)| s.apply(*v)).collect();
        Ok(self.target_scaling.invert(self.decision(&z)))
    }

    /// Standardized residuals `f(x_i) − z_i` on the stored rows.
    pub fn training_residuals(&self, targets: &[f64]) -> Vec<f64> {
        self.support_vectors
            .iter()
            .zip(targets)
            .map(|(sv, t)| self.decision(sv) - self.target_scaling.apply(*t))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy(seed: u64, n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(-3.0..3.0)]).collect();
        let y = x.iter().map(|r| r[0].sin() * 2.0 + rng.random_range(-0.3..0.3)).collect();
        (x, y)
    }

    #[test]
    fn constant_targets_fit_inside_tube() {
        let x: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let y = vec![42.0; 8];
        let m = svr_fit(&x, &y, &SvrParams::default(), None).unwrap();
        assert!(m.coefficients.iter().all(|&b| b == 0.0));
        assert_eq!(m.target_scaling.invert(m.bias), 42.0);
        for r in &x {
            assert_eq!(m.predict(r).unwrap(), 42.0);
        }
        assert_eq!(m.predict(&[100.0, -5.0]).unwrap(), 42.0);
    }

    #[test]
    fn single_coefficient_self_similarity() {
        let m = SvrModel::from_parts(vec![vec![0.3, -1.2]], vec![1.0], 0.0, 0.7);
        assert_eq!(m.predict(&[0.3, -1.2]).unwrap(), 1.0);
        assert!(m.predict(&[0.3]).is_err());
    }

    #[test]
    fn dual_feasibility() {
        for seed in 0..10 {
            let (x, y) = toy(seed, 30);
            let p = SvrParams {
                c: 2.0,
                ..Default::default()
            };
            let m = svr_fit(&x, &y, &p, None).unwrap();
            let s: f64 = m.coefficients.iter().sum();
            assert!(s.abs() <= 1e-8, "sum beta {s}");
            assert!(m.coefficients.iter().all(|b| b.abs() <= p.c));
            assert!(m.kkt_violation < p.tolerance);
        }
    }

    #[test]
    fn identical_rows_are_degenerate() {
        let x = vec![vec![1.0, 2.0]; 5];
        let y = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        assert!(matches!(svr_fit(&x, &y, &SvrParams::default(), None), Err(Error::Degenerate(_))));
    }

    #[test]
    fn bad_parameters_rejected() {
        let (x, y) = toy(1, 5);
        let p = SvrParams {
            c: 0.0,
            ..Default::default()
        };
        assert!(svr_fit(&x, &y, &p, None).is_err());
        assert!(svr_fit(&x[..1], &y[..1], &SvrParams::default(), None).is_err());
    }

    #[test]
    fn iteration_cap_reports_violation() {
        let (x, y) = toy(3, 40);
        let p = SvrParams {
            max_iter: Some(2),
            tolerance: 1e-9,
            ..Default::default()
        };
        match svr_fit(&x, &y, &p, None) {
            Err(Error::NotConverged { iterations, violation }) => {
                assert_eq!(iterations, 2);
                assert!(violation > 0.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn expired_deadline_aborts() {
        let (x, y) = toy(4, 40);
        let past = Instant::now() - std::time::Duration::from_secs(1);
        assert!(matches!(svr_fit(&x, &y, &SvrParams::default(), Some(past)), Err(Error::Timeout { .. })));
    }

    #[test]
    fn thinning_is_uniform() {
        assert_eq!(thin_indices(10, 5), [0, 2, 4, 6, 8]);
        assert_eq!(thin_indices(3, 5), [0, 1, 2]);
    }

    #[test]
    fn median_distance_small() {
        let rows = vec![vec![0.0], vec![1.0], vec![3.0]];
        // distances 1, 3, 2
        assert_eq!(median_pairwise_distance(&rows), 2.0);
        let rows = vec![vec![0.0], vec![1.0], vec![3.0], vec![7.0]];
        // 1,3,7,2,6,4 -> sorted 1,2,3,4,6,7 -> 3.5
        assert_eq!(median_pairwise_distance(&rows), 3.5);
    }

    #[test]
    fn rescaled_features_give_same_predictions() {
        let (x, y) = toy(9, 25);
        let scaled: Vec<Vec<f64>> = x.iter().map(|r| vec![r[0] * 10.0]).collect();
        let params = SvrParams {
            tolerance: 1e-9,
            ..SvrParams::default()
        };
        let a = svr_fit(&x, &y, &params, None).unwrap();
        let b = svr_fit(&scaled, &y, &params, None).unwrap();
        for (r, s) in x.iter().zip(&scaled) {
            let d = (a.predict(r).unwrap() - b.predict(s).unwrap()).abs();
            assert!(d <= 1e-6, "{d}");
        }
    }
}

//! ARIMA(p, d, q) by conditional least squares, with Hannan–Rissanen
//! iterations for the moving-average part.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ArimaOrder {
    pub p: usize,
    pub d: usize,
    pub q: usize,
}

impl ArimaOrder {
    pub const DEFAULT: ArimaOrder = ArimaOrder { p: 1, d: 0, q: 0 };

    pub fn new(p: usize, d: usize, q: usize) -> Result<Self> {
        if p > 3 || d > 2 || q > 3 {
            return Err(Error::Config(format!(
                "unsupported ARIMA order ({p},{d},{q}): need p <= 3, d <= 2, q <= 3"
            )));
        }
        Ok(ArimaOrder { p, d, q })
    }
}

impl Default for ArimaOrder {
    fn default() -> Self {
        Self::DEFAULT
    }
}

impl fmt::Display for ArimaOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.p, self.d, self.q)
    }
}

impl FromStr for ArimaOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<_> = s.split(',').map(|p| p.trim().parse::<usize>()).collect();
        match parts.as_slice() {
            [Ok(p), Ok(d), Ok(q)] => ArimaOrder::new(*p, *d, *q),
            _ => Err(Error::Config(format!("ARIMA order must look like p,d,q; got {s:?}"))),
        }
    }
}

/// Conditions noticed during estimation. Forecasts are produced regardless.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ArimaFlags {
    /// |Φ_1| ≥ 1 for an AR(1) fit.
    pub nonstationary: bool,
    /// The regression was singular (e.g. constant differenced series); the
    /// model fell back to the sample mean.
    pub degenerate: bool,
    /// Moving-average iterations hit the cap before the weights settled.
    pub ma_unconverged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArimaModel {
    pub order: ArimaOrder,
    pub ar_weights: Vec<f64>,
    pub ma_weights: Vec<f64>,
    /// Regression constant `c` of the differenced process.
    pub intercept: f64,
    /// In-sample innovations of the differenced series.
    pub residuals: Vec<f64>,
    /// Tail of the original (undifferenced) training series.
    pub last_values: Vec<f64>,
    /// Most recent innovations, oldest first.
    pub last_residuals: Vec<f64>,
    pub flags: ArimaFlags,
}

const MA_TOL: f64 = 1e-6;
const MA_MAX_ITER: usize = 200;

pub fn difference(series: &[f64], d: usize) -> Vec<f64> {
    let mut out = series.to_vec();
    for _ in 0..d {
        out = out.windows(2).map(|w| w[1] - w[0]).collect();
    }
    out
}

/// Least squares via normal equations with partial pivoting. `None` when
/// the design is (numerically) rank deficient.
fn least_squares(rows: &[Vec<f64>], y: &[f64]) -> Option<Vec<f64>> {
    let k = rows.first()?.len();
    let mut a = vec![vec![0.0; k + 1]; k];
    for (r, &t) in rows.iter().zip(y) {
        for i in 0..k {
            for j in 0..k {
                a[i][j] += r[i] * r[j];
            }
            a[i][k] += r[i] * t;
        }
    }
    let scale: f64 = (0..k).map(|i| a[i][i].abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        return None;
    }
    for col in 0..k {
        let piv = (col..k).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[piv][col].abs() <= 1e-10 * scale {
            return None;
        }
        a.swap(col, piv);
        for r in 0..k {
            if r != col {
                let f = a[r][col] / a[col][col];
                if f != 0.0 {
                    for c in col..=k {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
    }
    Some((0..k).map(|i| a[i][k] / a[i][i]).collect())
}

/// Design rows `[1, w_{t-1..p}, e_{t-1..q}]` for every `t` where all lags
/// exist inside the segment. `resid` holds per-segment innovation estimates
/// (`None` = not available).
fn design(
    segments: &[Vec<f64>],
    resid: Option<&[Vec<Option<f64>>]>,
    p: usize,
    q: usize,
) -> (Vec<Vec<f64>>, Vec<f64>, Vec<(usize, usize)>) {
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut at = Vec::new();
    let start = p.max(q);
    for (s, w) in segments.iter().enumerate() {
        'row: for t in start..w.len() {
            let mut row = Vec::with_capacity(1 + p + q);
            row.push(1.0);
            for i in 1..=p {
                row.push(w[t - i]);
            }
            for j in 1..=q {
                match resid.and_then(|r| r[s][t - j]) {
                    Some(e) => row.push(e),
                    None => continue 'row,
                }
            }
            x.push(row);
            y.push(w[t]);
            at.push((s, t));
        }
    }
    (x, y, at)
}

/// Innovations by running the ARMA recursion with zero pre-sample errors.
fn filter_residuals(w: &[f64], c: f64, ar: &[f64], ma: &[f64]) -> Vec<f64> {
    let p = ar.len();
    let mut e = vec![0.0; w.len()];
    for t in p..w.len() {
        let mut pred = c;
        for (i, phi) in ar.iter().enumerate() {
            pred += phi * w[t - 1 - i];
        }
        for (j, th) in ma.iter().enumerate() {
            if t > j {
                pred += th * e[t - 1 - j];
            }
        }
        e[t] = w[t] - pred;
    }
    e
}

pub fn arima_fit(series: &[f64], order: ArimaOrder) -> Result<ArimaModel> {
    arima_fit_segments(&[series.to_vec()], order)
}

/// Fits on several contiguous segments (e.g. one per day); no lag crosses a
/// segment boundary. Forecast state comes from the last segment.
pub fn arima_fit_segments(segments: &[Vec<f64>], order: ArimaOrder) -> Result<ArimaModel> {
    let ArimaOrder { p, d, q } = order;
    let need = p + d + q + 10;
    let total: usize = segments.iter().map(Vec::len).sum();
    if total <= need || segments.last().map_or(0, Vec::len) < p + d {
        return Err(Error::InsufficientData(format!(
            "ARIMA({order}) needs more than {need} observations, got {total}"
        )));
    }
    let diffed: Vec<Vec<f64>> = segments
        .iter()
        .filter(|s| s.len() > d)
        .map(|s| difference(s, d))
        .collect();
    let all: Vec<f64> = diffed.iter().flatten().copied().collect();
    let mean = all.iter().sum::<f64>() / all.len() as f64;
    let mut flags = ArimaFlags::default();

    let degenerate = |flags: &mut ArimaFlags| {
        flags.degenerate = true;
        (mean, vec![0.0; p], vec![0.0; q])
    };

    let (intercept, ar, ma) = if q == 0 {
        let (x, y, _) = design(&diffed, None, p, 0);
        match least_squares(&x, &y) {
            Some(b) if x.len() > b.len() => (b[0], b[1..].to_vec(), Vec::new()),
            _ => degenerate(&mut flags),
        }
    } else {
        // long autoregression for initial innovations
        let m = (p.max(q) + 5).min(all.len() / 4).max(1);
        let (x, y, at) = design(&diffed, None, m, 0);
        match least_squares(&x, &y) {
            None => degenerate(&mut flags),
            Some(long) => {
                let mut resid: Vec<Vec<Option<f64>>> = diffed.iter().map(|w| vec![None; w.len()]).collect();
                for ((s, t), (row, target)) in at.iter().zip(x.iter().zip(&y)) {
                    let fit: f64 = row.iter().zip(&long).map(|(a, b)| a * b).sum();
                    resid[*s][*t] = Some(target - fit);
                }
                let mut params: Option<Vec<f64>> = None;
                let mut converged = false;
                for _ in 0..MA_MAX_ITER {
                    let (x, y, _) = design(&diffed, Some(&resid), p, q);
                    let Some(b) = least_squares(&x, &y) else { break };
                    let settled = params
                        .as_ref()
                        .map(|old| old.iter().zip(&b).all(|(a, c)| (a - c).abs() < MA_TOL))
                        .unwrap_or(false);
                    let (c, ar, ma) = (b[0], &b[1..=p], &b[p + 1..]);
                    resid = diffed
                        .iter()
                        .map(|w| filter_residuals(w, c, ar, ma).into_iter().map(Some).collect())
                        .collect();
                    params = Some(b);
                    if settled {
                        converged = true;
                        break;
                    }
                }
                match params {
                    Some(b) => {
                        flags.ma_unconverged = !converged;
                        (b[0], b[1..=p].to_vec(), b[p + 1..].to_vec())
                    }
                    None => degenerate(&mut flags),
                }
            }
        }
    };
    if p == 1 && ar[0].abs() >= 1.0 {
        flags.nonstationary = true;
    }
    let residuals: Vec<f64> = diffed
        .iter()
        .flat_map(|w| filter_residuals(w, intercept, &ar, &ma))
        .collect();
    let last = segments.last().expect("checked non-empty");
    let keep = (p + d).max(1).min(last.len());
    let last_values = last[last.len() - keep..].to_vec();
    let last_diffed = difference(last, d);
    let last_resid = filter_residuals(&last_diffed, intercept, &ar, &ma);
    let last_residuals = last_resid[last_resid.len().saturating_sub(q)..].to_vec();
    Ok(ArimaModel {
        order,
        ar_weights: ar,
        ma_weights: ma,
        intercept,
        residuals,
        last_values,
        last_residuals,
        flags,
    })
}

impl ArimaModel {
    /// Process mean of the differenced series, `c / (1 − ΣΦ)`.
    pub fn mean(&self) -> Option<f64> {
        let s: f64 = self.ar_weights.iter().sum();
        (s != 1.0).then(|| self.intercept / (1.0 - s))
    }

    /// Forecasts `steps` ahead from the end of the training series.
    pub fn forecast(&self, steps: usize) -> Vec<f64> {
        self.extend(&self.last_values, &self.last_residuals, steps)
    }

    /// Forecasts `steps` ahead from an arbitrary history on the original
    /// scale (e.g. one window of lagged observations). Innovations over the
    /// history are recomputed with zero pre-sample errors.
    pub fn forecast_from(&self, history: &[f64], steps: usize) -> Result<Vec<f64>> {
        let ArimaOrder { p, d, q } = self.order;
        if history.len() < (p + d).max(1) {
            return Err(Error::Model(format!(
                "ARIMA({}) needs at least {} history values, got {}",
                self.order,
                (p + d).max(1),
                history.len()
            )));
        }
        let resid = if q > 0 {
            let w = difference(history, d);
            let e = filter_residuals(&w, self.intercept, &self.ar_weights, &self.ma_weights);
            e[e.len().saturating_sub(q)..].to_vec()
        } else {
            Vec::new()
        };
        Ok(self.extend(history, &resid, steps))
    }

    fn extend(&self, history: &[f64], resid: &[f64], steps: usize) -> Vec<f64> {
        let d = self.order.d;
        // levels[k] = k-times differenced history
        let mut levels = vec![history.to_vec()];
        for k in 0..d {
            let next = difference(&levels[k], 1);
            levels.push(next);
        }
        let mut errors = resid.to_vec();
        let mut out = Vec::with_capacity(steps);
        for _ in 0..steps {
            let w = &levels[d];
            let mut next = self.intercept;
            for (i, phi) in self.ar_weights.iter().enumerate() {
                next += phi * w.get(w.len().wrapping_sub(1 + i)).copied().unwrap_or(0.0);
            }
            for (j, th) in self.ma_weights.iter().enumerate() {
                next += th * errors.get(errors.len().wrapping_sub(1 + j)).copied().unwrap_or(0.0);
            }
            errors.push(0.0);
            levels[d].push(next);
            for k in (0..d).rev() {
                let v = levels[k].last().copied().unwrap_or(0.0) + levels[k + 1].last().copied().unwrap_or(0.0);
                levels[k].push(v);
            }
            out.push(*levels[0].last().expect("non-empty"));
        }
        out
    }
}

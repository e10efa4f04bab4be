use std::collections::BTreeSet;
use std::fmt;

use chrono::{NaiveDate, NaiveDateTime};

use super::IntensityMatrix;
use crate::clock;
use crate::error::{Error, Result};
use crate::road_network::{IntersectionId, RoadNetwork};

/// Sampling interval, input sequence length and prediction horizon, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SampleGrid {
    interval_secs: u32,
    sequence_secs: u32,
    prediction_secs: u32,
}

impl SampleGrid {
    pub fn new(interval_secs: u32, sequence_secs: u32, prediction_secs: u32) -> Result<Self> {
        if interval_secs == 0 || prediction_secs == 0 {
            return Err(Error::Grid("interval and prediction length must be positive".into()));
        }
        if sequence_secs < interval_secs || sequence_secs % interval_secs != 0 {
            return Err(Error::Grid(format!(
                "sequence length {sequence_secs}s is not a positive multiple of the {interval_secs}s interval"
            )));
        }
        if prediction_secs % interval_secs != 0 {
            return Err(Error::Grid(format!(
                "prediction length {prediction_secs}s is not a multiple of the {interval_secs}s interval"
            )));
        }
        Ok(SampleGrid {
            interval_secs,
            sequence_secs,
            prediction_secs,
        })
    }

    pub fn from_minutes(interval: f64, sequence: f64, prediction: f64) -> Result<Self> {
        Self::new(minutes_to_secs(interval)?, minutes_to_secs(sequence)?, minutes_to_secs(prediction)?)
    }

    pub fn interval_secs(&self) -> u32 {
        self.interval_secs
    }

    pub fn sequence_secs(&self) -> u32 {
        self.sequence_secs
    }

    pub fn prediction_secs(&self) -> u32 {
        self.prediction_secs
    }

    /// Number of lag features per window.
    pub fn lags(&self) -> usize {
        (self.sequence_secs / self.interval_secs) as usize
    }

    /// Horizon in sampling steps.
    pub fn horizon_steps(&self) -> usize {
        (self.prediction_secs / self.interval_secs) as usize
    }
}

impl fmt::Display for SampleGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}min/{}min/{}min",
            fmt_minutes(self.interval_secs),
            fmt_minutes(self.sequence_secs),
            fmt_minutes(self.prediction_secs)
        )
    }
}

/// Whole seconds in `min` minutes.
pub fn minutes_to_secs(min: f64) -> Result<u32> {
    let secs = min * 60.0;
    if !(secs > 0.0) || (secs - secs.round()).abs() > 1e-9 || secs > u32::MAX as f64 {
        return Err(Error::Grid(format!("{min} min is not a positive whole number of seconds")));
    }
    Ok(secs.round() as u32)
}

/// Minutes rendered without trailing zeros: 30s → "0.5", 300s → "5".
pub fn fmt_minutes(secs: u32) -> String {
    if secs % 60 == 0 {
        (secs / 60).to_string()
    } else {
        let v = secs as f64 / 60.0;
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// Lag-feature windows for one intersection.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    pub node: IntersectionId,
    pub grid: SampleGrid,
    /// Each row: `lags` intensities ending at `end_times[i]`, plus the
    /// neighbor sum at that instant when `has_neighbor_sum`.
    pub features: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub end_times: Vec<NaiveDateTime>,
    pub target_times: Vec<NaiveDateTime>,
    pub has_neighbor_sum: bool,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn lags(&self) -> usize {
        self.grid.lags()
    }

    pub fn feature_width(&self) -> usize {
        self.grid.lags() + usize::from(self.has_neighbor_sum)
    }

    /// The lag part of row `i`, oldest first.
    pub fn lag_values(&self, i: usize) -> &[f64] {
        &self.features[i][..self.grid.lags()]
    }

    pub fn neighbor_sum(&self, i: usize) -> Option<f64> {
        self.has_neighbor_sum.then(|| self.features[i][self.grid.lags()])
    }

    /// Windows whose date is in `dates`.
    pub fn restrict_to_dates(&self, dates: &BTreeSet<NaiveDate>) -> WindowedDataset {
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| dates.contains(&self.target_times[i].date()))
            .collect();
        self.select(&keep)
    }

    pub fn select(&self, idx: &[usize]) -> WindowedDataset {
        WindowedDataset {
            node: self.node.clone(),
            grid: self.grid,
            features: idx.iter().map(|&i| self.features[i].clone()).collect(),
            targets: idx.iter().map(|&i| self.targets[i]).collect(),
            end_times: idx.iter().map(|&i| self.end_times[i]).collect(),
            target_times: idx.iter().map(|&i| self.target_times[i]).collect(),
            has_neighbor_sum: self.has_neighbor_sum,
        }
    }
}

/// Builds windows for `node` from a matrix already sampled at
/// `grid.interval_secs()`. Windows touching a gap, a day boundary or a
/// missing cell are dropped.
pub fn window(
    m: &IntensityMatrix,
    node: &IntersectionId,
    grid: &SampleGrid,
    with_neighbor_sum: bool,
    net: &RoadNetwork,
) -> Result<WindowedDataset> {
    let col = m.column_index(node)?;
    let neighbor_cols = if with_neighbor_sum {
        net.neighbors(node)?
            .into_iter()
            .map(|n| m.column_index(n))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    let step = grid.interval_secs();
    if let Some(t) = m
        .timestamps()
        .iter()
        .find(|t| clock::window_offset(t).map_or(true, |o| o % step != 0))
    {
        return Err(Error::Interval(format!(
            "{} is off the {step}s sampling grid; resample first",
            clock::format_iso(t)
        )));
    }
    let lags = grid.lags();
    let horizon = grid.horizon_steps();
    let ts = m.timestamps();

    // run_start[i]: first row of the contiguous same-day run containing row i
    let mut run_start = vec![0usize; ts.len()];
    for i in 1..ts.len() {
        let contiguous = ts[i].date() == ts[i - 1].date()
            && (ts[i] - ts[i - 1]).num_seconds() == step as i64;
        run_start[i] = if contiguous { run_start[i - 1] } else { i };
    }

    let mut out = WindowedDataset {
        node: node.clone(),
        grid: *grid,
        features: Vec::new(),
        targets: Vec::new(),
        end_times: Vec::new(),
        target_times: Vec::new(),
        has_neighbor_sum: with_neighbor_sum,
    };
    for end in 0..ts.len() {
        let first = match (end + 1).checked_sub(lags) {
            Some(f) if f >= run_start[end] => f,
            _ => continue,
        };
        let target = end + horizon;
        if target >= ts.len() || run_start[target] != run_start[end] {
            continue;
        }
        let Some(y) = m.get(target, col) else { continue };
        let lagged: Option<Vec<f64>> = (first..=end).map(|r| m.get(r, col).map(|v| v as f64)).collect();
        let Some(mut row) = lagged else { continue };
        if with_neighbor_sum {
            let sum: Option<u64> = neighbor_cols.iter().map(|&c| m.get(end, c)).sum();
            let Some(sum) = sum else { continue };
            row.push(sum as f64);
        }
        out.features.push(row);
        out.targets.push(y as f64);
        out.end_times.push(ts[end]);
        out.target_times.push(ts[target]);
    }
    Ok(out)
}

/// Graph-SVR input: the dataset itself, once the neighbor-sum column is
/// confirmed present.
pub fn graph_features(train: &WindowedDataset) -> Result<&WindowedDataset> {
    if !train.has_neighbor_sum {
        return Err(Error::Model(format!(
            "dataset for {} lacks the neighbor-sum feature",
            train.node
        )));
    }
    Ok(train)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::BASE_CADENCE_SECS;
    use crate::color::Rgb;
    use crate::road_network::RoadSegment;
    use crate::series_store::resample;

    fn id(s: &str) -> IntersectionId {
        IntersectionId::parse(s).unwrap()
    }

    fn day(d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2019, 11, d).unwrap()
    }

    fn seg(sid: &str, c: u8, from: &str, to: &str) -> RoadSegment {
        RoadSegment {
            id: sid.into(),
            color: Rgb([c, 0, 0]),
            from: id(from),
            to: id(to),
            pixel_count: 1,
        }
    }

    fn triangle() -> RoadNetwork {
        RoadNetwork::from_parts(
            [id("A"), id("B"), id("C"), id("D")],
            [seg("ab", 1, "A", "B"), seg("bc", 2, "B", "C"), seg("ca", 3, "C", "A")],
        )
    }

    fn matrix(days: &[NaiveDate], cols: &[&str], f: impl Fn(usize, usize) -> Option<u64>) -> IntensityMatrix {
        let mut ts = Vec::new();
        for d in days {
            ts.extend(clock::day_instants(*d, BASE_CADENCE_SECS));
        }
        let cols: Vec<_> = cols.iter().map(|c| id(c)).collect();
        let mut values = Vec::new();
        for r in 0..ts.len() {
            for c in 0..cols.len() {
                values.push(f(r, c));
            }
        }
        IntensityMatrix::new(ts, cols, values).unwrap()
    }

    #[test]
    fn lag_count_matches_sequence() {
        let g = SampleGrid::from_minutes(1.0, 15.0, 5.0).unwrap();
        assert_eq!(g.lags(), 15);
        assert_eq!(g.horizon_steps(), 5);
        assert_eq!(g.to_string(), "1min/15min/5min");
        assert_eq!(SampleGrid::from_minutes(0.5, 45.0, 5.0).unwrap().to_string(), "0.5min/45min/5min");
        assert!(SampleGrid::from_minutes(5.0, 12.0, 5.0).is_err());
        assert!(SampleGrid::from_minutes(1.0, 15.0, 0.0).is_err());
    }

    #[test]
    fn one_day_window_count() {
        let net = triangle();
        let m = matrix(&[day(4)], &["A", "B", "C", "D"], |r, c| Some((r + c) as u64));
        let m = resample(&m, 60).unwrap();
        assert_eq!(m.rows(), 1080);
        let g = SampleGrid::from_minutes(1.0, 60.0, 5.0).unwrap();
        let ds = window(&m, &id("A"), &g, false, &net).unwrap();
        assert_eq!(ds.len(), 1080 - 60 - 5 + 1);
        assert_eq!(ds.feature_width(), 60);
        // first window: rows 0..60, target row 64; column A holds 2*r
        assert_eq!(ds.features[0][0], 0.0);
        assert_eq!(ds.features[0][59], 118.0);
        assert_eq!(ds.targets[0], 128.0);
        assert_eq!((ds.target_times[0] - ds.end_times[0]).num_minutes(), 5);
    }

    #[test]
    fn constant_series() {
        let net = triangle();
        let m = matrix(&[day(4)], &["A", "B", "C", "D"], |_, _| Some(7));
        let g = SampleGrid::from_minutes(0.5, 15.0, 5.0).unwrap();
        let ds = window(&m, &id("B"), &g, false, &net).unwrap();
        assert!(!ds.is_empty());
        assert!(ds.features.iter().flatten().all(|&v| v == 7.0));
        assert!(ds.targets.iter().all(|&v| v == 7.0));
    }

    #[test]
    fn no_window_spans_two_days() {
        let net = triangle();
        let m = matrix(&[day(4), day(5)], &["A", "B", "C", "D"], |r, _| Some(r as u64));
        let g = SampleGrid::from_minutes(0.5, 15.0, 5.0).unwrap();
        let ds = window(&m, &id("A"), &g, false, &net).unwrap();
        assert_eq!(ds.len(), 2 * (2160 - 30 - 10 + 1));
        for i in 0..ds.len() {
            assert_eq!(ds.end_times[i].date(), ds.target_times[i].date());
        }
    }

    #[test]
    fn missing_cells_poison_windows() {
        let net = triangle();
        let m = matrix(&[day(4)], &["A", "B", "C", "D"], |r, c| if c == 0 && r == 100 { None } else { Some(1) });
        let g = SampleGrid::from_minutes(0.5, 5.0, 0.5).unwrap();
        let ds = window(&m, &id("A"), &g, false, &net).unwrap();
        // windows whose lags or target include row 100: ends 99 (target), 100..=109 (lags)
        assert_eq!(ds.len(), (2160 - 10 - 1 + 1) - 11);
    }

    #[test]
    fn neighbor_sum_column() {
        let net = triangle();
        // triangle A,B,C plus isolated D; values 10*col + row for 3 hand-set rows
        let m = matrix(&[day(4)], &["A", "B", "C", "D"], |r, c| Some((10 * c + r) as u64));
        let g = SampleGrid::new(30, 30, 30).unwrap();
        let small = IntensityMatrix::new(
            m.timestamps()[..3].to_vec(),
            m.columns().to_vec(),
            (0..3).flat_map(|r| m.row(r).to_vec()).collect(),
        )
        .unwrap();
        let a = window(&small, &id("A"), &g, true, &net).unwrap();
        let b = window(&small, &id("B"), &g, true, &net).unwrap();
        let c = window(&small, &id("C"), &g, true, &net).unwrap();
        let d = window(&small, &id("D"), &g, true, &net).unwrap();
        // rows 0,1 have a target; neighbors: A={B,C}, B={A,C}, C={A,B}
        let sums = |ds: &WindowedDataset| (0..ds.len()).map(|i| ds.neighbor_sum(i).unwrap()).collect::<Vec<_>>();
        assert_eq!(sums(&a), [(10 + 20) as f64, (11 + 21) as f64]);
        assert_eq!(sums(&b), [(0 + 20) as f64, (1 + 21) as f64]);
        assert_eq!(sums(&c), [(0 + 10) as f64, (1 + 11) as f64]);
        assert_eq!(sums(&d), [0.0, 0.0]);
        assert!(graph_features(&a).is_ok());
        let plain = window(&small, &id("A"), &g, false, &net).unwrap();
        assert!(graph_features(&plain).is_err());
    }

    #[test]
    fn unresampled_matrix_rejected() {
        let net = triangle();
        let m = matrix(&[day(4)], &["A", "B", "C", "D"], |_, _| Some(1));
        let g = SampleGrid::from_minutes(1.0, 15.0, 5.0).unwrap();
        assert!(matches!(window(&m, &id("A"), &g, false, &net), Err(Error::Interval(_))));
        assert!(matches!(window(&m, &id("Z"), &g, false, &net), Err(Error::UnknownNode(_))));
    }
}

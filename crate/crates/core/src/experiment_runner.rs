//! Grid execution, combination ranking, outlier exclusion and the
//! weekday/weekend quadrant suite.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::time::{Duration, Instant};

use chrono::{NaiveDate, NaiveDateTime};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::clock;
use crate::error::{Error, Result};
use crate::evaluation::{self, Aggregate, EvaluationReport, NodeMetrics, AGGREGATE_NODE};
use crate::forecasters::{fit_model, Hyperparameters, ModelKind, NodeTraining};
use crate::road_network::{IntersectionId, RoadNetwork};
use crate::series_store::{
    fmt_minutes, minutes_to_secs, resample, split_days, window, CalendarSplit, IntensityMatrix, SampleGrid,
    SplitPolicy,
};

pub const DEFAULT_INTERVALS_MIN: [f64; 3] = [0.5, 1.0, 5.0];
pub const DEFAULT_SEQUENCE_MIN: [f64; 4] = [15.0, 30.0, 45.0, 60.0];
pub const DEFAULT_PREDICTION_MIN: [f64; 5] = [5.0, 15.0, 30.0, 45.0, 60.0];
pub const DEFAULT_TOP_K: usize = 8;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(600);

/// One (interval, sequence length, horizon) triple, in seconds. Ordering is
/// numeric on the triple and serves as the combination key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Combination {
    pub interval_secs: u32,
    pub sequence_secs: u32,
    pub prediction_secs: u32,
}

impl Combination {
    pub fn grid(&self) -> Result<SampleGrid> {
        SampleGrid::new(self.interval_secs, self.sequence_secs, self.prediction_secs)
    }

    pub fn from_minutes(interval: &str, sequence: &str, prediction: &str) -> Result<Self> {
        let m = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Grid(format!("{s:?} is not a number of minutes")))
                .and_then(minutes_to_secs)
        };
        Ok(Combination {
            interval_secs: m(interval)?,
            sequence_secs: m(sequence)?,
            prediction_secs: m(prediction)?,
        })
    }
}

impl From<SampleGrid> for Combination {
    fn from(g: SampleGrid) -> Self {
        Combination {
            interval_secs: g.interval_secs(),
            sequence_secs: g.sequence_secs(),
            prediction_secs: g.prediction_secs(),
        }
    }
}

impl fmt::Display for Combination {
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

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridSpec {
    pub intervals_secs: Vec<u32>,
    pub sequence_secs: Vec<u32>,
    pub prediction_secs: Vec<u32>,
    pub models: Vec<ModelKind>,
}

impl Default for GridSpec {
    fn default() -> Self {
        let secs = |v: &[f64]| v.iter().map(|m| (m * 60.0).round() as u32).collect();
        GridSpec {
            intervals_secs: secs(&DEFAULT_INTERVALS_MIN),
            sequence_secs: secs(&DEFAULT_SEQUENCE_MIN),
            prediction_secs: secs(&DEFAULT_PREDICTION_MIN),
            models: ModelKind::ALL.to_vec(),
        }
    }
}

impl GridSpec {
    /// Builds a spec from minute values. Duplicates are removed.
    pub fn from_minutes(intervals: &[f64], sequences: &[f64], predictions: &[f64], models: &[ModelKind]) -> Result<Self> {
        let conv = |v: &[f64], what: &str| -> Result<Vec<u32>> {
            if v.is_empty() {
                return Err(Error::Grid(format!("no {what} values")));
            }
            let set: BTreeSet<u32> = v.iter().map(|m| minutes_to_secs(*m)).collect::<Result<_>>()?;
            Ok(set.into_iter().collect())
        };
        if models.is_empty() {
            return Err(Error::Grid("no models selected".into()));
        }
        let models: BTreeSet<ModelKind> = models.iter().copied().collect();
        Ok(GridSpec {
            intervals_secs: conv(intervals, "interval")?,
            sequence_secs: conv(sequences, "sequence length")?,
            prediction_secs: conv(predictions, "prediction length")?,
            models: models.into_iter().collect(),
        })
    }

    pub fn single(grid: SampleGrid, models: &[ModelKind]) -> Self {
        GridSpec {
            intervals_secs: vec![grid.interval_secs()],
            sequence_secs: vec![grid.sequence_secs()],
            prediction_secs: vec![grid.prediction_secs()],
            models: models.to_vec(),
        }
    }

    /// Every triple in key order, valid or not.
    pub fn combinations(&self) -> Vec<Combination> {
        let mut out = Vec::new();
        for &i in &self.intervals_secs {
            for &s in &self.sequence_secs {
                for &p in &self.prediction_secs {
                    out.push(Combination {
                        interval_secs: i,
                        sequence_secs: s,
                        prediction_secs: p,
                    });
                }
            }
        }
        out.sort();
        out.dedup();
        out
    }

    pub fn canonical(&self) -> String {
        let mins = |v: &[u32]| v.iter().map(|s| fmt_minutes(*s)).collect::<Vec<_>>().join(",");
        format!(
            "intervals_min={} sequence_min={} prediction_min={} models={}",
            mins(&self.intervals_secs),
            mins(&self.sequence_secs),
            mins(&self.prediction_secs),
            self.models.iter().map(|m| m.name()).collect::<Vec<_>>().join(",")
        )
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub hyper: Hyperparameters,
    /// Budget for a single fit; `None` disables the guard.
    pub timeout: Option<Duration>,
    /// Worker threads; 0 uses the logical CPU count.
    pub workers: usize,
    pub seed: u64,
    pub keep_predictions: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            hyper: Hyperparameters::default(),
            timeout: Some(DEFAULT_TIMEOUT),
            workers: 0,
            seed: 0,
            keep_predictions: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodePredictions {
    pub node: IntersectionId,
    pub times: Vec<NaiveDateTime>,
    pub truth: Vec<f64>,
    pub prediction: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CellOutcome {
    Evaluated(EvaluationReport),
    Skipped(String),
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub combination: Combination,
    pub model: ModelKind,
    pub split: String,
    pub outcome: CellOutcome,
    pub duration: Duration,
    pub fingerprint: String,
    pub predictions: Vec<NodePredictions>,
}

impl RunResult {
    pub fn report(&self) -> Option<&EvaluationReport> {
        match &self.outcome {
            CellOutcome::Evaluated(r) => Some(r),
            _ => None,
        }
    }

    pub fn summary(&self) -> CellSummary {
        let agg = self.report().map(|r| r.aggregate);
        CellSummary {
            combination: self.combination,
            model: self.model,
            rmse: agg.map(|a| a.rmse),
            mae: agg.map(|a| a.mae),
            corr: agg.and_then(|a| a.corr),
        }
    }
}

fn join_dates(days: &BTreeSet<NaiveDate>) -> String {
    days.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",")
}

/// Hash of everything that determines a cell's numbers.
pub fn fingerprint(combo: &Combination, kind: ModelKind, split: &CalendarSplit, hyper: &Hyperparameters, seed: u64) -> String {
    let text = format!(
        "combo={combo}|model={kind}|split={}|train={}|test={}|{}|seed={seed}",
        split.descriptor(),
        join_dates(&split.train_days),
        join_dates(&split.test_days),
        hyper.canonical(kind)
    );
    hex::encode(&Sha256::digest(text.as_bytes())[..8])
}

fn check_coverage(m: &IntensityMatrix, split: &CalendarSplit) -> Result<()> {
    let have: BTreeSet<NaiveDate> = m.dates().into_iter().collect();
    let missing: Vec<NaiveDate> = split.all_days().difference(&have).copied().collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::MissingDates(missing))
    }
}

struct Evaluated {
    report: EvaluationReport,
    predictions: Vec<NodePredictions>,
}

fn evaluate_cell(
    m: &IntensityMatrix,
    net: &RoadNetwork,
    grid: &SampleGrid,
    kind: ModelKind,
    split: &CalendarSplit,
    opts: &RunOptions,
) -> Result<Evaluated> {
    let mut per_node = BTreeMap::new();
    let mut predictions = Vec::new();
    for (col, node) in m.columns().iter().enumerate() {
        let ds = window(m, node, grid, kind.needs_neighbor_sum(), net)?;
        let train = ds.restrict_to_dates(&split.train_days);
        let test = ds.restrict_to_dates(&split.test_days);
        if test.is_empty() {
            log::warn!("{grid} {kind}: node {node} has no test windows, skipped");
            continue;
        }
        if train.is_empty() && matches!(kind, ModelKind::Svr | ModelKind::SvrGraph) {
            log::warn!("{grid} {kind}: node {node} has no training windows, skipped");
            continue;
        }
        let series = match kind {
            ModelKind::Ha | ModelKind::Arima => NodeTraining::from_matrix(m, col, &split.train_days, grid.interval_secs()),
            _ => NodeTraining::default(),
        };
        let started = Instant::now();
        let deadline = opts.timeout.map(|t| started + t);
        let model = fit_model(kind, &train, &series, &opts.hyper, deadline)?;
        if let Some(t) = opts.timeout {
            if started.elapsed() > t {
                return Err(Error::Timeout {
                    elapsed_ms: started.elapsed().as_millis(),
                });
            }
        }
        let pred = model.predict_all(&test)?;
        per_node.insert(node.clone(), NodeMetrics::score(&test.targets, &pred)?);
        if opts.keep_predictions {
            predictions.push(NodePredictions {
                node: node.clone(),
                times: test.target_times.clone(),
                truth: test.targets.clone(),
                prediction: pred,
            });
        }
    }
    if per_node.is_empty() {
        return Err(Error::InsufficientData("no intersection has test windows".into()));
    }
    Ok(Evaluated {
        report: evaluation::aggregate(per_node)?,
        predictions,
    })
}

/// Fits and scores every (combination, model) cell. Output order is the
/// combination key, then model, whatever the completion order.
pub fn run_grid(
    m: &IntensityMatrix,
    net: &RoadNetwork,
    spec: &GridSpec,
    split: &CalendarSplit,
    opts: &RunOptions,
) -> Result<Vec<RunResult>> {
    check_coverage(m, split)?;
    let days = split.all_days();
    let base = m.restrict_to_dates(&days);
    let mut sampled: BTreeMap<u32, IntensityMatrix> = BTreeMap::new();
    for &i in &spec.intervals_secs {
        sampled.insert(i, resample(&base, i)?);
    }

    let mut jobs = Vec::new();
    for combo in spec.combinations() {
        for &kind in &spec.models {
            jobs.push((combo, kind));
        }
    }
    let descriptor = split.descriptor();
    let run = |&(combo, kind): &(Combination, ModelKind)| -> RunResult {
        let started = Instant::now();
        let (outcome, predictions) = match combo.grid() {
            Err(e) => {
                log::warn!("{combo} {kind}: skipped: {e}");
                (CellOutcome::Skipped(e.to_string()), Vec::new())
            }
            Ok(grid) => match evaluate_cell(&sampled[&combo.interval_secs], net, &grid, kind, split, opts) {
                Ok(ev) => (CellOutcome::Evaluated(ev.report), ev.predictions),
                Err(e) => {
                    log::warn!("{combo} {kind}: failed: {e}");
                    (CellOutcome::Failed(e.to_string()), Vec::new())
                }
            },
        };
        log::info!("{combo} {kind}: done in {:?}", started.elapsed());
        RunResult {
            combination: combo,
            model: kind,
            split: descriptor.clone(),
            outcome,
            duration: started.elapsed(),
            fingerprint: fingerprint(&combo, kind, split, &opts.hyper, opts.seed),
            predictions,
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    Ok(pool.install(|| jobs.par_iter().map(run).collect()))
}

/// Aggregate metrics of one (combination, model) cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellSummary {
    pub combination: Combination,
    pub model: ModelKind,
    pub rmse: Option<f64>,
    pub mae: Option<f64>,
    pub corr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedCombination {
    pub combination: Combination,
    /// Means over the models that produced metrics; `None` if none did.
    pub avg_rmse: Option<f64>,
    pub avg_mae: Option<f64>,
    pub models: Vec<ModelKind>,
}

/// Orders combinations by mean RMSE, then mean MAE, then combination key.
/// Combinations without any scored model sort last.
pub fn rank_summaries(cells: &[CellSummary]) -> Vec<RankedCombination> {
    let mut groups: BTreeMap<Combination, Vec<&CellSummary>> = BTreeMap::new();
    for c in cells {
        groups.entry(c.combination).or_default().push(c);
    }
    let mut ranked: Vec<RankedCombination> = groups
        .into_iter()
        .map(|(combination, cs)| {
            let scored: Vec<&&CellSummary> = cs.iter().filter(|c| c.rmse.is_some() && c.mae.is_some()).collect();
            let k = scored.len() as f64;
            let (avg_rmse, avg_mae) = if scored.is_empty() {
                (None, None)
            } else {
                (
                    Some(scored.iter().map(|c| c.rmse.unwrap()).sum::<f64>() / k),
                    Some(scored.iter().map(|c| c.mae.unwrap()).sum::<f64>() / k),
                )
            };
            let mut models: Vec<ModelKind> = scored.iter().map(|c| c.model).collect();
            models.sort();
            models.dedup();
            RankedCombination {
                combination,
                avg_rmse,
                avg_mae,
                models,
            }
        })
        .collect();
    let key = |v: Option<f64>| v.unwrap_or(f64::INFINITY);
    ranked.sort_by(|a, b| {
        key(a.avg_rmse)
            .total_cmp(&key(b.avg_rmse))
            .then(key(a.avg_mae).total_cmp(&key(b.avg_mae)))
            .then(a.combination.cmp(&b.combination))
    });
    ranked
}

pub fn rank_combinations(results: &[RunResult]) -> Vec<RankedCombination> {
    rank_summaries(&results.iter().map(RunResult::summary).collect::<Vec<_>>())
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutlierReport {
    pub before: Aggregate,
    pub after: Aggregate,
    pub excluded: Vec<(IntersectionId, NodeMetrics)>,
}

pub fn outlier_report(result: &RunResult, exclude: &[IntersectionId]) -> Result<OutlierReport> {
    let report = result
        .report()
        .ok_or_else(|| Error::Model(format!("{} {} has no evaluation", result.combination, result.model)))?;
    outlier_report_for(report, exclude)
}

pub fn outlier_report_for(report: &EvaluationReport, exclude: &[IntersectionId]) -> Result<OutlierReport> {
    let after = report.without(exclude)?;
    Ok(OutlierReport {
        before: report.aggregate,
        after: after.aggregate,
        excluded: exclude.iter().map(|n| (n.clone(), report.per_node[n])).collect(),
    })
}

/// The four regime splits: 14 weekdays train / remaining weekdays test,
/// all weekdays / all weekend days, 7 weekend days / last 3 weekdays,
/// 7 weekend days / remaining weekend days.
pub fn regime_quadrants() -> [SplitPolicy; 4] {
    [
        SplitPolicy::WeekdaysOnly(14),
        SplitPolicy::WeekdaysTrainWeekendsTest,
        SplitPolicy::WeekendsTrainWeekdaysTest { train: 7, test: 3 },
        SplitPolicy::WeekendsOnly(7),
    ]
}

#[derive(Debug)]
pub struct Quadrant {
    pub policy: SplitPolicy,
    pub results: Result<Vec<RunResult>>,
}

/// Runs `grid` under each policy. A quadrant the calendar cannot satisfy
/// carries the split error; the others still run.
pub fn weekday_weekend_suite(
    m: &IntensityMatrix,
    net: &RoadNetwork,
    grid: SampleGrid,
    models: &[ModelKind],
    policies: &[SplitPolicy],
    opts: &RunOptions,
) -> Vec<Quadrant> {
    let spec = GridSpec::single(grid, models);
    policies
        .iter()
        .map(|&policy| Quadrant {
            policy,
            results: split_days(m, policy).and_then(|split| run_grid(m, net, &spec, &split, opts)),
        })
        .collect()
}

pub const RESULTS_HEADER: [&str; 12] = [
    "interval_min",
    "seq_min",
    "pred_min",
    "model",
    "split",
    "node",
    "rmse",
    "mae",
    "corr",
    "n",
    "duration_ms",
    "fingerprint",
];

/// One line of the results CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub interval_min: String,
    pub seq_min: String,
    pub pred_min: String,
    pub model: String,
    pub split: String,
    pub node: String,
    pub rmse: Option<f64>,
    pub mae: Option<f64>,
    pub corr: Option<f64>,
    pub n: usize,
    pub duration_ms: Option<u64>,
    pub fingerprint: String,
}

impl ResultRow {
    pub fn combination(&self) -> Result<Combination> {
        Combination::from_minutes(&self.interval_min, &self.seq_min, &self.pred_min)
    }

    pub fn is_aggregate(&self) -> bool {
        self.node == AGGREGATE_NODE
    }

    pub fn summary(&self) -> Result<CellSummary> {
        Ok(CellSummary {
            combination: self.combination()?,
            model: self.model.parse()?,
            rmse: self.rmse,
            mae: self.mae,
            corr: self.corr,
        })
    }
}

/// Flattens results: node rows followed by one AGGREGATE row per cell.
/// Skipped and failed cells contribute only an AGGREGATE row with `n = 0`.
pub fn result_rows(results: &[RunResult], record_durations: bool) -> Vec<ResultRow> {
    let mut rows = Vec::new();
    for r in results {
        let c = r.combination;
        let row = |node: &str, rmse, mae, corr, n| ResultRow {
            interval_min: fmt_minutes(c.interval_secs),
            seq_min: fmt_minutes(c.sequence_secs),
            pred_min: fmt_minutes(c.prediction_secs),
            model: r.model.to_string(),
            split: r.split.clone(),
            node: node.to_string(),
            rmse,
            mae,
            corr,
            n,
            duration_ms: record_durations.then(|| r.duration.as_millis() as u64),
            fingerprint: r.fingerprint.clone(),
        };
        match r.report() {
            Some(rep) => {
                for (node, m) in &rep.per_node {
                    rows.push(row(node.as_str(), Some(m.rmse), Some(m.mae), m.corr, m.n));
                }
                let a = rep.aggregate;
                rows.push(row(AGGREGATE_NODE, Some(a.rmse), Some(a.mae), a.corr, a.nodes));
            }
            None => rows.push(row(AGGREGATE_NODE, None, None, None, 0)),
        }
    }
    rows
}

pub fn write_results<W: Write>(writer: W, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(RESULTS_HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<results>", e))?;
    Ok(())
}

pub fn read_results<R: Read>(reader: R) -> Result<Vec<ResultRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    crate::io::expect_header(&rdr.headers()?.clone(), &RESULTS_HEADER)?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row: ResultRow = rec.deserialize(None).map_err(|e| {
            let column = match e.kind() {
                csv::ErrorKind::Deserialize { err, .. } => err.field().and_then(|f| RESULTS_HEADER.get(f as usize)).copied(),
                _ => None,
            }
            .unwrap_or("?");
            Error::Schema {
                column: column.to_string(),
                message: format!("row {}: {e}", i + 2),
            }
        })?;
        rows.push(row);
    }
    Ok(rows)
}

/// Per-cell wall-clock times, kept apart from the deterministic results.
pub fn write_timings<W: Write>(writer: W, results: &[RunResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["interval_min", "seq_min", "pred_min", "model", "split", "status", "duration_ms"])?;
    for r in results {
        let c = r.combination;
        let status = match r.outcome {
            CellOutcome::Evaluated(_) => "ok",
            CellOutcome::Skipped(_) => "skipped",
            CellOutcome::Failed(_) => "failed",
        };
        w.write_record([
            fmt_minutes(c.interval_secs),
            fmt_minutes(c.sequence_secs),
            fmt_minutes(c.prediction_secs),
            r.model.to_string(),
            r.split.clone(),
            status.to_string(),
            r.duration.as_millis().to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<timings>", e))?;
    Ok(())
}

pub const PREDICTIONS_HEADER: [&str; 9] = [
    "interval_min",
    "seq_min",
    "pred_min",
    "model",
    "split",
    "node",
    "timestamp",
    "truth",
    "prediction",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub interval_min: String,
    pub seq_min: String,
    pub pred_min: String,
    pub model: String,
    pub split: String,
    pub node: String,
    pub timestamp: String,
    pub truth: f64,
    pub prediction: f64,
}

pub fn write_predictions<W: Write>(writer: W, results: &[RunResult]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(PREDICTIONS_HEADER)?;
    for r in results {
        let c = r.combination;
        for p in &r.predictions {
            for ((t, y), yhat) in p.times.iter().zip(&p.truth).zip(&p.prediction) {
                w.serialize(PredictionRow {
                    interval_min: fmt_minutes(c.interval_secs),
                    seq_min: fmt_minutes(c.sequence_secs),
                    pred_min: fmt_minutes(c.prediction_secs),
                    model: r.model.to_string(),
                    split: r.split.clone(),
                    node: p.node.to_string(),
                    timestamp: clock::format_iso(t),
                    truth: *y,
                    prediction: *yhat,
                })?;
            }
        }
    }
    w.flush().map_err(|e| Error::io("<predictions>", e))?;
    Ok(())
}

pub fn read_predictions<R: Read>(reader: R) -> Result<Vec<PredictionRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    crate::io::expect_header(&rdr.headers()?.clone(), &PREDICTIONS_HEADER)?;
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// Everything needed to reproduce a grid run.
#[derive(Debug, Clone)]
pub struct RunManifest<'a> {
    pub spec: &'a GridSpec,
    pub split: &'a CalendarSplit,
    pub options: &'a RunOptions,
    /// (path, sha256) of every input file.
    pub inputs: Vec<(String, String)>,
    /// Canonical configuration text, if a config was used.
    pub config: Option<String>,
}

pub fn write_manifest<W: Write>(mut w: W, m: &RunManifest<'_>) -> std::io::Result<()> {
    writeln!(w, "# congestion-lab run manifest")?;
    writeln!(w, "version = {}", env!("CARGO_PKG_VERSION"))?;
    writeln!(w, "grid = {}", m.spec.canonical())?;
    writeln!(w, "combinations = {}", m.spec.combinations().len())?;
    writeln!(w, "split = {}", m.split.descriptor())?;
    writeln!(w, "train_days = {}", join_dates(&m.split.train_days))?;
    writeln!(w, "test_days = {}", join_dates(&m.split.test_days))?;
    for kind in ModelKind::ALL {
        writeln!(w, "hyper.{} = {}", kind, m.options.hyper.canonical(kind))?;
    }
    writeln!(w, "seed = {}", m.options.seed)?;
    match m.options.timeout {
        Some(t) => writeln!(w, "timeout_secs = {}", t.as_secs_f64())?,
        None => writeln!(w, "timeout_secs = none")?,
    }
    for (path, hash) in &m.inputs {
        writeln!(w, "input = {path} sha256:{hash}")?;
    }
    if let Some(cfg) = &m.config {
        writeln!(w, "[config]")?;
        w.write_all(cfg.as_bytes())?;
        if !cfg.ends_with('\n') {
            writeln!(w)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock;
    use crate::evaluation::aggregate;

    fn id(s: &str) -> IntersectionId {
        IntersectionId::parse(s).unwrap()
    }

    fn combo(i: u32, s: u32, p: u32) -> Combination {
        Combination {
            interval_secs: i,
            sequence_secs: s,
            prediction_secs: p,
        }
    }

    /// Two nodes over `days` days at 30 s, smooth daily shape plus a node offset.
    fn fixture(days: u32) -> (IntensityMatrix, RoadNetwork) {
        let a = id("A");
        let b = id("B");
        let net = RoadNetwork::from_parts(
            [a.clone(), b.clone()],
            [crate::road_network::RoadSegment {
                id: "ab".into(),
                color: crate::color::Rgb::new(1, 2, 3),
                from: a.clone(),
                to: b.clone(),
                pixel_count: 10,
            }],
        );
        let mut ts = Vec::new();
        let mut values = Vec::new();
        for d in 0..days {
            let date = NaiveDate::from_ymd_opt(2019, 11, 3 + d).unwrap();
            for (k, t) in clock::day_instants(date, 30).into_iter().enumerate() {
                ts.push(t);
                let base = 50.0 + 40.0 * (k as f64 / 2160.0 * std::f64::consts::PI).sin();
                values.push(Some((base + (d % 2) as f64) as u64));
                values.push(Some((base * 0.5 + 3.0) as u64));
            }
        }
        (IntensityMatrix::new(ts, vec![a, b], values).unwrap(), net)
    }

    #[test]
    fn default_grid_shape() {
        let spec = GridSpec::default();
        let combos = spec.combinations();
        assert_eq!(combos.len(), 60);
        assert_eq!(combos.len() * spec.models.len(), 240);
        assert!(combos.iter().all(|c| c.grid().is_ok()));
        assert_eq!(combos[0].to_string(), "0.5min/15min/5min");
    }

    #[test]
    fn invalid_combination_is_skipped_row() {
        let (m, net) = fixture(3);
        let split = split_days(&m, SplitPolicy::FirstKTrain(2)).unwrap();
        let spec = GridSpec::from_minutes(&[5.0], &[7.5, 15.0], &[5.0], &[ModelKind::Ha]).unwrap();
        let results = run_grid(&m, &net, &spec, &split, &RunOptions::default()).unwrap();
        assert_eq!(results.len(), 2);
        assert!(matches!(results[0].outcome, CellOutcome::Skipped(_)));
        assert!(results[1].report().is_some());
        let rows = result_rows(&results, false);
        assert_eq!(rows.iter().filter(|r| r.is_aggregate()).count(), 2);
        assert_eq!(rows[0].n, 0);
        assert_eq!(rows[0].rmse, None);
    }

    #[test]
    fn single_cell_and_determinism() {
        let (m, net) = fixture(3);
        let split = split_days(&m, SplitPolicy::FirstKTrain(2)).unwrap();
        let spec = GridSpec::from_minutes(&[5.0], &[15.0], &[5.0], &ModelKind::ALL).unwrap();
        let opts = RunOptions {
            workers: 3,
            ..RunOptions::default()
        };
        let one = run_grid(&m, &net, &spec, &split, &opts).unwrap();
        assert_eq!(one.len(), 4);
        assert!(one.iter().all(|r| r.report().is_some()), "{:?}", one.iter().map(|r| &r.outcome).collect::<Vec<_>>());
        let two = run_grid(&m, &net, &spec, &split, &RunOptions { workers: 1, ..opts.clone() }).unwrap();
        let (mut a, mut b) = (Vec::new(), Vec::new());
        write_results(&mut a, &result_rows(&one, false)).unwrap();
        write_results(&mut b, &result_rows(&two, false)).unwrap();
        assert_eq!(a, b);
        let single = GridSpec::from_minutes(&[5.0], &[15.0], &[5.0], &[ModelKind::Ha]).unwrap();
        assert_eq!(run_grid(&m, &net, &single, &split, &opts).unwrap().len(), 1);
    }

    #[test]
    fn missing_split_days_are_listed() {
        let (m, net) = fixture(2);
        let d = |x| NaiveDate::from_ymd_opt(2019, 11, x).unwrap();
        let split = CalendarSplit::new([d(3)].into(), [d(20), d(21)].into()).unwrap();
        match run_grid(&m, &net, &GridSpec::default(), &split, &RunOptions::default()) {
            Err(Error::MissingDates(ds)) => assert_eq!(ds, vec![d(20), d(21)]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn fingerprints_track_configuration() {
        let d = |x| NaiveDate::from_ymd_opt(2019, 11, x).unwrap();
        let split = CalendarSplit::new([d(3)].into(), [d(4)].into()).unwrap();
        let h = Hyperparameters::default();
        let c = combo(30, 900, 300);
        assert_eq!(fingerprint(&c, ModelKind::Svr, &split, &h, 1), fingerprint(&c, ModelKind::Svr, &split, &h, 1));
        assert_ne!(fingerprint(&c, ModelKind::Svr, &split, &h, 1), fingerprint(&c, ModelKind::Svr, &split, &h, 2));
        let mut h2 = h.clone();
        h2.svr.c = 2.0;
        assert_ne!(fingerprint(&c, ModelKind::Svr, &split, &h, 1), fingerprint(&c, ModelKind::Svr, &split, &h2, 1));
        assert_eq!(fingerprint(&c, ModelKind::Ha, &split, &h, 1), fingerprint(&c, ModelKind::Ha, &split, &h2, 1));
    }

    fn cell(c: Combination, model: ModelKind, rmse: f64, mae: f64) -> CellSummary {
        CellSummary {
            combination: c,
            model,
            rmse: Some(rmse),
            mae: Some(mae),
            corr: None,
        }
    }

    #[test]
    fn ranking_orders_by_rmse_then_mae_then_key() {
        let (a, b, c, d) = (combo(30, 900, 300), combo(60, 900, 300), combo(300, 900, 300), combo(300, 1800, 300));
        let cells = vec![
            cell(a, ModelKind::Ha, 60.0, 1.0),
            cell(b, ModelKind::Ha, 50.0, 45.0),
            cell(c, ModelKind::Ha, 50.0, 40.0),
            cell(d, ModelKind::Ha, 50.0, 40.0),
            CellSummary {
                combination: combo(60, 1800, 300),
                model: ModelKind::Svr,
                rmse: None,
                mae: None,
                corr: None,
            },
        ];
        let order: Vec<Combination> = rank_summaries(&cells).iter().map(|r| r.combination).collect();
        assert_eq!(order, vec![c, d, b, a, combo(60, 1800, 300)]);
    }

    #[test]
    fn ranking_averages_models_run() {
        let a = combo(30, 900, 300);
        let r = rank_summaries(&[cell(a, ModelKind::Ha, 10.0, 4.0), cell(a, ModelKind::Arima, 30.0, 8.0)]);
        assert_eq!(r[0].avg_rmse, Some(20.0));
        assert_eq!(r[0].avg_mae, Some(6.0));
        assert_eq!(r[0].models, vec![ModelKind::Ha, ModelKind::Arima]);
    }

    #[test]
    fn outlier_exclusion() {
        let m = |rmse| NodeMetrics { rmse, mae: rmse / 2.0, corr: None, n: 5 };
        let rep = aggregate([(id("a"), m(10.0)), (id("b"), m(20.0)), (id("c"), m(90.0))].into()).unwrap();
        let o = outlier_report_for(&rep, &[id("c")]).unwrap();
        assert_eq!(o.before.rmse, 40.0);
        assert_eq!(o.after.rmse, 15.0);
        assert_eq!(o.excluded, vec![(id("c"), m(90.0))]);
        let same = outlier_report_for(&rep, &[]).unwrap();
        assert_eq!(same.before, same.after);
        assert!(outlier_report_for(&rep, &[id("q")]).is_err());
    }

    #[test]
    fn results_csv_round_trip_and_schema() {
        let (m, net) = fixture(3);
        let split = split_days(&m, SplitPolicy::FirstKTrain(2)).unwrap();
        let spec = GridSpec::from_minutes(&[5.0], &[15.0], &[5.0], &[ModelKind::Ha]).unwrap();
        let rows = result_rows(&run_grid(&m, &net, &spec, &split, &RunOptions::default()).unwrap(), true);
        let mut buf = Vec::new();
        write_results(&mut buf, &rows).unwrap();
        assert_eq!(read_results(buf.as_slice()).unwrap(), rows);
        let bad = "interval_min,seq_min,pred_min,model,split,node,rmse,mae,correlation,n,duration_ms,fingerprint\n";
        match read_results(bad.as_bytes()) {
            Err(Error::Schema { column, .. }) => assert_eq!(column, "corr"),
            other => panic!("{other:?}"),
        }
        let bad_value = format!("{}\n0.5,15,5,HA,s,A,abc,1,,3,,f\n", RESULTS_HEADER.join(","));
        match read_results(bad_value.as_bytes()) {
            Err(Error::Schema { column, .. }) => assert_eq!(column, "rmse"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn suite_rejects_missing_regime() {
        // Nov 4-7 2019 are Monday-Thursday
        let a = id("A");
        let net = RoadNetwork::from_parts([a.clone()], []);
        let ts: Vec<_> = (4..=7)
            .flat_map(|d| clock::day_instants(NaiveDate::from_ymd_opt(2019, 11, d).unwrap(), 300))
            .collect();
        let values = (0..ts.len()).map(|i| Some((i % 17) as u64)).collect();
        let m = IntensityMatrix::new(ts, vec![a], values).unwrap();
        let grid = SampleGrid::from_minutes(5.0, 15.0, 5.0).unwrap();
        let policies = [SplitPolicy::WeekdaysOnly(3), SplitPolicy::WeekendsOnly(1), SplitPolicy::WeekdaysTrainWeekendsTest];
        let q = weekday_weekend_suite(&m, &net, grid, &[ModelKind::Ha], &policies, &RunOptions::default());
        assert!(q[0].results.is_ok());
        assert!(q[1].results.is_err());
        assert!(q[2].results.is_err());
    }
}

//! The four forecasting methods behind a common fit/predict contract.

pub mod arima;
pub mod ha;
mod persist;
pub mod svr;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use chrono::{NaiveDate, NaiveDateTime};

pub use arima::{arima_fit, arima_fit_segments, ArimaFlags, ArimaModel, ArimaOrder};
pub use ha::{ha_fit, HaModel};
pub use persist::{read_model, read_model_file, write_model, write_model_file, ModelFile};
pub use svr::{svr_fit, Bandwidth, SvrModel, SvrParams};

use crate::error::{Error, Result};
use crate::series_store::{graph_features, IntensityMatrix, WindowedDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ModelKind {
    Ha,
    Svr,
    SvrGraph,
    Arima,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Ha, ModelKind::Svr, ModelKind::SvrGraph, ModelKind::Arima];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Ha => "HA",
            ModelKind::Svr => "SVR",
            ModelKind::SvrGraph => "SVR_GRAPH",
            ModelKind::Arima => "ARIMA",
        }
    }

    pub fn needs_neighbor_sum(self) -> bool {
        self == ModelKind::SvrGraph
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().replace('-', "_").as_str() {
            "HA" => Ok(ModelKind::Ha),
            "SVR" => Ok(ModelKind::Svr),
            "SVR_GRAPH" | "GRAPH_SVR" => Ok(ModelKind::SvrGraph),
            "ARIMA" => Ok(ModelKind::Arima),
            _ => Err(Error::Config(format!("unknown model {s:?}; expected HA, SVR, SVR_GRAPH or ARIMA"))),
        }
    }
}

/// Hyperparameters for every model kind.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Hyperparameters {
    pub svr: SvrParams,
    pub arima_order: ArimaOrder,
}

impl Hyperparameters {
    /// Canonical text of the settings that affect `kind`.
    pub fn canonical(&self, kind: ModelKind) -> String {
        match kind {
            ModelKind::Ha => "ha".into(),
            ModelKind::Svr | ModelKind::SvrGraph => format!(
                "svr c={:?} eps={:?} sigma={} tol={:?} max_iter={:?} cap={}",
                self.svr.c, self.svr.epsilon, self.svr.sigma, self.svr.tolerance, self.svr.max_iter, self.svr.max_train_rows
            ),
            ModelKind::Arima => format!("arima order={}", self.arima_order),
        }
    }
}

/// Training material for one intersection.
#[derive(Debug, Clone, Default)]
pub struct NodeTraining {
    /// Every present (instant, intensity) on the training days.
    pub observations: Vec<(NaiveDateTime, f64)>,
    /// Gap-free runs of the training series, one or more per day.
    pub segments: Vec<Vec<f64>>,
}

impl NodeTraining {
    /// Collects column `col` of a sampled matrix over `days`.
    pub fn from_matrix(m: &IntensityMatrix, col: usize, days: &BTreeSet<NaiveDate>, step_secs: u32) -> Self {
        let mut out = NodeTraining::default();
        let mut current: Vec<f64> = Vec::new();
        let mut prev: Option<NaiveDateTime> = None;
        for (r, t) in m.timestamps().iter().enumerate() {
            if !days.contains(&t.date()) {
                continue;
            }
            let contiguous = prev
                .map(|p| p.date() == t.date() && (*t - p).num_seconds() == step_secs as i64)
                .unwrap_or(false);
            match m.get(r, col) {
                Some(v) => {
                    if !contiguous && !current.is_empty() {
                        out.segments.push(std::mem::take(&mut current));
                    }
                    current.push(v as f64);
                    out.observations.push((*t, v as f64));
                    prev = Some(*t);
                }
                None => {
                    if !current.is_empty() {
                        out.segments.push(std::mem::take(&mut current));
                    }
                    prev = None;
                }
            }
        }
        if !current.is_empty() {
            out.segments.push(current);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FittedModel {
    Ha(HaModel),
    Svr { model: SvrModel, graph: bool },
    Arima(ArimaModel),
}

impl FittedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            FittedModel::Ha(_) => ModelKind::Ha,
            FittedModel::Svr { graph: false, .. } => ModelKind::Svr,
            FittedModel::Svr { graph: true, .. } => ModelKind::SvrGraph,
            FittedModel::Arima(_) => ModelKind::Arima,
        }
    }

    /// Predicts the target of window `i` of `ds`.
    pub fn predict(&self, ds: &WindowedDataset, i: usize) -> Result<f64> {
        match self {
            FittedModel::Ha(m) => Ok(m.predict(ds.target_times[i])),
            FittedModel::Svr { model, graph } => {
                if *graph {
                    graph_features(ds)?;
                    model.predict(&ds.features[i])
                } else {
                    model.predict(ds.lag_values(i))
                }
            }
            FittedModel::Arima(m) => {
                let h = ds.grid.horizon_steps();
                let f = m.forecast_from(ds.lag_values(i), h)?;
                Ok(f[h - 1])
            }
        }
    }

    pub fn predict_all(&self, ds: &WindowedDataset) -> Result<Vec<f64>> {
        (0..ds.len()).map(|i| self.predict(ds, i)).collect()
    }
}

/// Fits `kind` for one intersection. `windows` must carry the neighbor-sum
/// column when `kind` is Graph-SVR.
pub fn fit_model(
    kind: ModelKind,
    windows: &WindowedDataset,
    series: &NodeTraining,
    hyper: &Hyperparameters,
    deadline: Option<Instant>,
) -> Result<FittedModel> {
    match kind {
        ModelKind::Ha => Ok(FittedModel::Ha(ha_fit(series.observations.iter().copied())?)),
        ModelKind::Svr => {
            let rows: Vec<Vec<f64>> = (0..windows.len()).map(|i| windows.lag_values(i).to_vec()).collect();
            Ok(FittedModel::Svr {
                model: svr_fit(&rows, &windows.targets, &hyper.svr, deadline)?,
                graph: false,
            })
        }
        ModelKind::SvrGraph => {
            let ds = graph_features(windows)?;
            Ok(FittedModel::Svr {
                model: svr_fit(&ds.features, &ds.targets, &hyper.svr, deadline)?,
                graph: true,
            })
        }
        ModelKind::Arima => Ok(FittedModel::Arima(arima_fit_segments(&series.segments, hyper.arima_order)?)),
    }
}

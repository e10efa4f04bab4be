//! Pipeline configuration file. Command-line flags override file values,
//! which override built-in defaults.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment_runner::{
    GridSpec, RunOptions, DEFAULT_INTERVALS_MIN, DEFAULT_PREDICTION_MIN, DEFAULT_SEQUENCE_MIN, DEFAULT_TIMEOUT,
    DEFAULT_TOP_K,
};
use crate::forecasters::{ArimaOrder, Bandwidth, Hyperparameters, ModelKind, SvrParams};
use crate::frame_extraction::{Aggregation, TrafficPalette};
use crate::series_store::{Resampling, SplitPolicy};

pub const WORKERS_ENV: &str = "CONGESTION_LAB_WORKERS";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub frames: Option<PathBuf>,
    pub mask: Option<PathBuf>,
    pub registry: Option<PathBuf>,
    pub palette: Option<PathBuf>,
    pub matrix: Option<PathBuf>,
    pub results: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub intervals_min: Vec<f64>,
    pub sequence_min: Vec<f64>,
    pub prediction_min: Vec<f64>,
    pub models: Vec<String>,
    pub top_k: usize,
    /// Per-fit budget; 0 disables the guard.
    pub timeout_secs: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            intervals_min: DEFAULT_INTERVALS_MIN.to_vec(),
            sequence_min: DEFAULT_SEQUENCE_MIN.to_vec(),
            prediction_min: DEFAULT_PREDICTION_MIN.to_vec(),
            models: ModelKind::ALL.iter().map(|m| m.name().to_string()).collect(),
            top_k: DEFAULT_TOP_K,
            timeout_secs: DEFAULT_TIMEOUT.as_secs_f64(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvrConfig {
    pub c: f64,
    pub epsilon: f64,
    pub sigma: String,
    pub tolerance: f64,
    pub max_iter: Option<usize>,
    pub max_train_rows: usize,
}

impl Default for SvrConfig {
    fn default() -> Self {
        let p = SvrParams::default();
        SvrConfig {
            c: p.c,
            epsilon: p.epsilon,
            sigma: p.sigma.to_string(),
            tolerance: p.tolerance,
            max_iter: p.max_iter,
            max_train_rows: p.max_train_rows,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArimaConfig {
    pub order: String,
}

impl Default for ArimaConfig {
    fn default() -> Self {
        ArimaConfig {
            order: ArimaOrder::default().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub split: String,
    pub seed: u64,
    pub workers: Option<usize>,
    pub aggregation: String,
    pub resampling: String,
    pub paths: PathsConfig,
    pub grid: GridConfig,
    pub svr: SvrConfig,
    pub arima: ArimaConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            split: SplitPolicy::WeekdaysOnly(14).to_string(),
            seed: 0,
            workers: None,
            aggregation: "count".into(),
            resampling: "decimate".into(),
            paths: PathsConfig::default(),
            grid: GridConfig::default(),
            svr: SvrConfig::default(),
            arima: ArimaConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths are taken from the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingInput(format!("config file {}", path.display())),
            _ => Error::io(path, e),
        })?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let Some(dir) = path.parent() {
            cfg.paths.resolve_against(dir);
        }
        Ok(cfg)
    }

    /// Parses every typed field once so bad values fail at load time.
    pub fn validate(&self) -> Result<()> {
        self.split_policy()?;
        self.aggregation()?;
        self.resampling()?;
        self.grid_spec()?;
        self.hyperparameters()?;
        Ok(())
    }

    /// Serialized form recorded in run manifests.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn split_policy(&self) -> Result<SplitPolicy> {
        self.split.parse()
    }

    pub fn aggregation(&self) -> Result<Aggregation> {
        self.aggregation.parse()
    }

    pub fn resampling(&self) -> Result<Resampling> {
        self.resampling.parse()
    }

    pub fn models(&self) -> Result<Vec<ModelKind>> {
        self.grid.models.iter().map(|m| m.parse()).collect()
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        GridSpec::from_minutes(
            &self.grid.intervals_min,
            &self.grid.sequence_min,
            &self.grid.prediction_min,
            &self.models()?,
        )
    }

    pub fn hyperparameters(&self) -> Result<Hyperparameters> {
        let s = &self.svr;
        if !(s.c > 0.0) || !(s.epsilon >= 0.0) || !(s.tolerance > 0.0) || s.max_train_rows == 0 {
            return Err(Error::Config(
                "svr needs c > 0, epsilon ≥ 0, tolerance > 0 and max_train_rows ≥ 1".into(),
            ));
        }
        Ok(Hyperparameters {
            svr: SvrParams {
                c: s.c,
                epsilon: s.epsilon,
                sigma: s.sigma.parse::<Bandwidth>()?,
                tolerance: s.tolerance,
                max_iter: s.max_iter,
                max_train_rows: s.max_train_rows,
            },
            arima_order: self.arima.order.parse()?,
        })
    }

    pub fn timeout(&self) -> Result<Option<Duration>> {
        let t = self.grid.timeout_secs;
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::Config(format!("timeout_secs must be ≥ 0, got {t}")));
        }
        Ok((t > 0.0).then(|| Duration::from_secs_f64(t)))
    }

    pub fn palette(&self) -> Result<TrafficPalette> {
        match &self.paths.palette {
            Some(p) => TrafficPalette::load(p),
            None => Ok(TrafficPalette::default()),
        }
    }

    /// Worker count: the config value, else `CONGESTION_LAB_WORKERS`, else 0
    /// (all logical CPUs). Flags are applied on top by the caller.
    pub fn resolved_workers(&self) -> Result<usize> {
        if let Some(w) = self.workers {
            return Ok(w);
        }
        match std::env::var(WORKERS_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{WORKERS_ENV}={v:?} is not a worker count"))),
            Err(_) => Ok(0),
        }
    }

    pub fn run_options(&self) -> Result<RunOptions> {
        Ok(RunOptions {
            hyper: self.hyperparameters()?,
            timeout: self.timeout()?,
            workers: self.resolved_workers()?,
            seed: self.seed,
            keep_predictions: false,
        })
    }
}

impl PathsConfig {
    fn resolve_against(&mut self, dir: &Path) {
        for p in [
            &mut self.frames,
            &mut self.mask,
            &mut self.registry,
            &mut self.palette,
            &mut self.matrix,
            &mut self.results,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
    }
}

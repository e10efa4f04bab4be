//! Versioned line-oriented text format for fitted models.
//!
//! ```text
//! congestion-lab-model 1
//! kind = SVR
//! node = 1234
//! grid = 30,2700,300
//! ...model-specific keys...
//! ```
//!
//! Floats are written in Rust's shortest round-trip form, so a reloaded
//! model predicts bit-identically.

use std::io::{BufRead, Write};
use std::path::Path;

use super::arima::{ArimaFlags, ArimaModel, ArimaOrder};
use super::ha::HaModel;
use super::svr::{Scaling, SvrModel};
use super::{FittedModel, ModelKind};
use crate::error::{Error, Result};
use crate::road_network::IntersectionId;
use crate::series_store::SampleGrid;

const MAGIC: &str = "congestion-lab-model";
const VERSION: u32 = 1;

/// A fitted model plus the context it was trained for.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub node: IntersectionId,
    pub grid: SampleGrid,
    pub model: FittedModel,
}

fn f(v: f64) -> String {
    format!("{v:?}")
}

fn list(v: &[f64]) -> String {
    v.iter().map(|x| f(*x)).collect::<Vec<_>>().join(",")
}

pub fn write_model<W: Write>(mut w: W, file: &ModelFile) -> std::io::Result<()> {
    writeln!(w, "{MAGIC} {VERSION}")?;
    writeln!(w, "kind = {}", file.model.kind())?;
    writeln!(w, "node = {}", file.node)?;
    let g = &file.grid;
    writeln!(w, "grid = {},{},{}", g.interval_secs(), g.sequence_secs(), g.prediction_secs())?;
    match &file.model {
        FittedModel::Ha(m) => {
            writeln!(w, "global_mean = {}", f(m.global_mean))?;
            for (slot, mean) in &m.fallback_means {
                writeln!(w, "slot = {slot},{}", f(*mean))?;
            }
            for ((wd, slot), mean) in &m.slot_means {
                writeln!(w, "weekday_slot = {wd},{slot},{}", f(*mean))?;
            }
        }
        FittedModel::Svr { model: m, .. } => {
            writeln!(w, "c = {}", f(m.c))?;
            writeln!(w, "epsilon = {}", f(m.epsilon))?;
            writeln!(w, "sigma = {}", f(m.sigma))?;
            writeln!(w, "bias = {}", f(m.bias))?;
            writeln!(w, "iterations = {}", m.iterations)?;
            writeln!(w, "kkt_violation = {}", f(m.kkt_violation))?;
            writeln!(w, "target_scaling = {},{}", f(m.target_scaling.mean), f(m.target_scaling.std))?;
            for s in &m.feature_scaling {
                writeln!(w, "feature_scaling = {},{}", f(s.mean), f(s.std))?;
            }
            for (beta, row) in m.coefficients.iter().zip(&m.support_vectors) {
                writeln!(w, "row = {};{}", f(*beta), list(row))?;
            }
        }
        FittedModel::Arima(m) => {
            writeln!(w, "order = {}", m.order)?;
            writeln!(w, "intercept = {}", f(m.intercept))?;
            writeln!(w, "ar = {}", list(&m.ar_weights))?;
            writeln!(w, "ma = {}", list(&m.ma_weights))?;
            writeln!(w, "last_values = {}", list(&m.last_values))?;
            writeln!(w, "last_residuals = {}", list(&m.last_residuals))?;
            writeln!(
                w,
                "flags = {},{},{}",
                m.flags.nonstationary as u8, m.flags.degenerate as u8, m.flags.ma_unconverged as u8
            )?;
            writeln!(w, "residuals = {}", list(&m.residuals))?;
        }
    }
    Ok(())
}

struct Entries(Vec<(String, String)>);

impl Entries {
    fn all<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.0.iter().filter(move |(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    fn one<'a>(&'a self, key: &'a str) -> Result<&'a str> {
        self.all(key).next().ok_or_else(|| bad(format!("missing key {key:?}")))
    }
}

fn bad(msg: String) -> Error {
    Error::Model(format!("model file: {msg}"))
}

fn num<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.trim().parse::<T>().map_err(|_| bad(format!("bad number {s:?}")))
}

fn nums(s: &str) -> Result<Vec<f64>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(num::<f64>).collect()
}

fn pair(s: &str) -> Result<(f64, f64)> {
    match nums(s)?.as_slice() {
        [a, b] => Ok((*a, *b)),
        _ => Err(bad(format!("expected two numbers, got {s:?}"))),
    }
}

pub fn read_model<R: BufRead>(r: R) -> Result<ModelFile> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .transpose()
        .map_err(|e| Error::io("<model>", e))?
        .unwrap_or_default();
    let version = header
        .strip_prefix(MAGIC)
        .map(str::trim)
        .ok_or_else(|| bad("not a model file".into()))?;
    if num::<u32>(version)? != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let mut entries = Vec::new();
    for line in lines {
        let line = line.map_err(|e| Error::io("<model>", e))?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once(" = ")
            .ok_or_else(|| bad(format!("malformed line {line:?}")))?;
        entries.push((k.trim().to_string(), v.to_string()));
    }
    let e = Entries(entries);
    let kind: ModelKind = e.one("kind")?.parse()?;
    let node = IntersectionId::parse(e.one("node")?)?;
    let g: Vec<u32> = e.one("grid")?.split(',').map(num).collect::<Result<_>>()?;
    let grid = match g.as_slice() {
        [a, b, c] => SampleGrid::new(*a, *b, *c)?,
        _ => return Err(bad("grid needs three values".into())),
    };
    let model = match kind {
        ModelKind::Ha => {
            let mut m = HaModel {
                slot_means: Default::default(),
                fallback_means: Default::default(),
                global_mean: num(e.one("global_mean")?)?,
            };
            for v in e.all("slot") {
                let (slot, mean) = v.split_once(',').ok_or_else(|| bad(format!("bad slot {v:?}")))?;
                m.fallback_means.insert(num(slot)?, num(mean)?);
            }
            for v in e.all("weekday_slot") {
                let parts: Vec<&str> = v.splitn(3, ',').collect();
                let [wd, slot, mean] = parts.as_slice() else {
                    return Err(bad(format!("bad weekday_slot {v:?}")));
                };
                m.slot_means.insert((num(wd)?, num(slot)?), num(mean)?);
            }
            FittedModel::Ha(m)
        }
        ModelKind::Svr | ModelKind::SvrGraph => {
            let (tm, ts) = pair(e.one("target_scaling")?)?;
            let feature_scaling = e
                .all("feature_scaling")
                .map(|v| pair(v).map(|(mean, std)| Scaling { mean, std }))
                .collect::<Result<Vec<_>>>()?;
            let mut coefficients = Vec::new();
            let mut support_vectors = Vec::new();
            for v in e.all("row") {
                let (beta, row) = v.split_once(';').ok_or_else(|| bad(format!("bad row {v:?}")))?;
                coefficients.push(num(beta)?);
                let row = nums(row)?;
                if row.len() != feature_scaling.len() {
                    return Err(bad("row width differs from feature scaling".into()));
                }
                support_vectors.push(row);
            }
            FittedModel::Svr {
                model: SvrModel {
                    coefficients,
                    bias: num(e.one("bias")?)?,
                    sigma: num(e.one("sigma")?)?,
                    c: num(e.one("c")?)?,
                    epsilon: num(e.one("epsilon")?)?,
                    support_vectors,
                    feature_scaling,
                    target_scaling: Scaling { mean: tm, std: ts },
                    iterations: num(e.one("iterations")?)?,
                    kkt_violation: num(e.one("kkt_violation")?)?,
                },
                graph: kind == ModelKind::SvrGraph,
            }
        }
        ModelKind::Arima => {
            let order: ArimaOrder = e.one("order")?.parse()?;
            let flags: Vec<u8> = e.one("flags")?.split(',').map(num).collect::<Result<_>>()?;
            let [ns, dg, mu] = flags.as_slice() else {
                return Err(bad("flags needs three values".into()));
            };
            let m = ArimaModel {
                order,
                ar_weights: nums(e.one("ar")?)?,
                ma_weights: nums(e.one("ma")?)?,
                intercept: num(e.one("intercept")?)?,
                residuals: nums(e.one("residuals")?)?,
                last_values: nums(e.one("last_values")?)?,
                last_residuals: nums(e.one("last_residuals")?)?,
                flags: ArimaFlags {
                    nonstationary: *ns != 0,
                    degenerate: *dg != 0,
                    ma_unconverged: *mu != 0,
                },
            };
            if m.ar_weights.len() != order.p || m.ma_weights.len() != order.q {
                return Err(bad("weight counts do not match the order".into()));
            }
            FittedModel::Arima(m)
        }
    };
    Ok(ModelFile { node, grid, model })
}

pub fn write_model_file(path: &Path, file: &ModelFile) -> Result<()> {
    crate::io::atomic_write_with(path, |buf| write_model(buf, file).map_err(|e| Error::io(path, e)))
}

pub fn read_model_file(path: &Path) -> Result<ModelFile> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_model(std::io::BufReader::new(f))
}

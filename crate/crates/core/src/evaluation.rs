//! RMSE, MAE and Pearson correlation, per intersection and aggregated.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::road_network::IntersectionId;

fn check(truth: &[f64], pred: &[f64], min: usize) -> Result<()> {
    if truth.len() != pred.len() {
        return Err(Error::Metric(format!(
            "length mismatch: {} truth vs {} predictions",
            truth.len(),
            pred.len()
        )));
    }
    if truth.len() < min {
        return Err(Error::Metric(format!("need at least {min} samples, got {}", truth.len())));
    }
    Ok(())
}

pub fn rmse(truth: &[f64], pred: &[f64]) -> Result<f64> {
    check(truth, pred, 1)?;
    let sse: f64 = truth.iter().zip(pred).map(|(y, p)| (p - y) * (p - y)).sum();
    Ok((sse / truth.len() as f64).sqrt())
}

pub fn mae(truth: &[f64], pred: &[f64]) -> Result<f64> {
    check(truth, pred, 1)?;
    let sae: f64 = truth.iter().zip(pred).map(|(y, p)| (y - p).abs()).sum();
    Ok(sae / truth.len() as f64)
}

/// Pearson correlation. `None` when either vector is constant.
pub fn corr(truth: &[f64], pred: &[f64]) -> Result<Option<f64>> {
    check(truth, pred, 2)?;
    let n = truth.len() as f64;
    let mx = truth.iter().sum::<f64>() / n;
    let my = pred.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in truth.iter().zip(pred) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(None);
    }
    Ok(Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeMetrics {
    pub rmse: f64,
    pub mae: f64,
    pub corr: Option<f64>,
    pub n: usize,
}

impl NodeMetrics {
    /// Scores one intersection. A single sample has undefined correlation.
    pub fn score(truth: &[f64], pred: &[f64]) -> Result<Self> {
        Ok(NodeMetrics {
            rmse: rmse(truth, pred)?,
            mae: mae(truth, pred)?,
            corr: if truth.len() >= 2 { corr(truth, pred)? } else { None },
            n: truth.len(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub rmse: f64,
    pub mae: f64,
    pub corr: Option<f64>,
    /// Number of nodes averaged.
    pub nodes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub per_node: BTreeMap<IntersectionId, NodeMetrics>,
    pub aggregate: Aggregate,
}

/// Unweighted means over nodes; undefined correlations are left out of the
/// correlation mean only.
pub fn aggregate(per_node: BTreeMap<IntersectionId, NodeMetrics>) -> Result<EvaluationReport> {
    if per_node.is_empty() {
        return Err(Error::Metric("cannot aggregate an empty report".into()));
    }
    let k = per_node.len() as f64;
    let rmse = per_node.values().map(|m| m.rmse).sum::<f64>() / k;
    let mae = per_node.values().map(|m| m.mae).sum::<f64>() / k;
    let corrs: Vec<f64> = per_node.values().filter_map(|m| m.corr).collect();
    let corr = (!corrs.is_empty()).then(|| corrs.iter().sum::<f64>() / corrs.len() as f64);
    let nodes = per_node.len();
    Ok(EvaluationReport {
        per_node,
        aggregate: Aggregate { rmse, mae, corr, nodes },
    })
}

/// Scores every node from paired (truth, prediction) vectors.
pub fn evaluate<'a, I>(pairs: I) -> Result<EvaluationReport>
where
    I: IntoIterator<Item = (IntersectionId, &'a [f64], &'a [f64])>,
{
    let mut per_node = BTreeMap::new();
    for (node, truth, pred) in pairs {
        per_node.insert(node, NodeMetrics::score(truth, pred)?);
    }
    aggregate(per_node)
}

impl EvaluationReport {
    /// The aggregate recomputed without `exclude`.
    pub fn without(&self, exclude: &[IntersectionId]) -> Result<EvaluationReport> {
        for node in exclude {
            if !self.per_node.contains_key(node) {
                return Err(Error::UnknownNode(node.to_string()));
            }
        }
        let kept = self
            .per_node
            .iter()
            .filter(|(k, _)| !exclude.contains(k))
            .map(|(k, v)| (k.clone(), *v))
            .collect();
        aggregate(kept)
    }
}

pub const REPORT_HEADER: [&str; 5] = ["node", "rmse", "mae", "corr", "n"];
pub const AGGREGATE_NODE: &str = "AGGREGATE";

#[derive(Debug, Serialize, Deserialize)]
struct ReportRecord {
    node: String,
    rmse: f64,
    mae: f64,
    corr: Option<f64>,
    n: usize,
}

/// Writes `node,rmse,mae,corr,n`; the AGGREGATE row's `n` is the node count.
pub fn write_report<W: Write>(writer: W, report: &EvaluationReport) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(REPORT_HEADER)?;
    for (node, m) in &report.per_node {
        w.serialize(ReportRecord {
            node: node.to_string(),
            rmse: m.rmse,
            mae: m.mae,
            corr: m.corr,
            n: m.n,
        })?;
    }
    let a = &report.aggregate;
    w.serialize(ReportRecord {
        node: AGGREGATE_NODE.into(),
        rmse: a.rmse,
        mae: a.mae,
        corr: a.corr,
        n: a.nodes,
    })?;
    w.flush().map_err(|e| Error::io("<report>", e))?;
    Ok(())
}

/// Reads a report back, recomputing the aggregate from the node rows.
pub fn read_report<R: Read>(reader: R) -> Result<EvaluationReport> {
    let mut rdr = csv::Reader::from_reader(reader);
    crate::io::expect_header(&rdr.headers()?.clone(), &REPORT_HEADER)?;
    let mut per_node = BTreeMap::new();
    for rec in rdr.deserialize::<ReportRecord>() {
        let rec = rec?;
        if rec.node == AGGREGATE_NODE {
            continue;
        }
        per_node.insert(
            IntersectionId::parse(&rec.node)?,
            NodeMetrics {
                rmse: rec.rmse,
                mae: rec.mae,
                corr: rec.corr,
                n: rec.n,
            },
        );
    }
    aggregate(per_node)
}

pub const POINTS_HEADER: [&str; 4] = ["node", "timestamp", "truth", "prediction"];

/// One prediction against its ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointPrediction {
    pub node: String,
    pub timestamp: String,
    pub truth: f64,
    pub prediction: f64,
}

pub fn write_points<W: Write>(writer: W, points: &[PointPrediction]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(POINTS_HEADER)?;
    for p in points {
        w.serialize(p)?;
    }
    w.flush().map_err(|e| Error::io("<predictions>", e))?;
    Ok(())
}

pub fn read_points<R: Read>(reader: R) -> Result<Vec<PointPrediction>> {
    let mut rdr = csv::Reader::from_reader(reader);
    crate::io::expect_header(&rdr.headers()?.clone(), &POINTS_HEADER)?;
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// Groups points by node and scores each group.
pub fn evaluate_points(points: &[PointPrediction]) -> Result<EvaluationReport> {
    let mut by_node: BTreeMap<IntersectionId, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for p in points {
        let e = by_node.entry(IntersectionId::parse(&p.node)?).or_default();
        e.0.push(p.truth);
        e.1.push(p.prediction);
    }
    evaluate(by_node.iter().map(|(n, (t, y))| (n.clone(), t.as_slice(), y.as_slice())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(s: &str) -> IntersectionId {
        IntersectionId::parse(s).unwrap()
    }

    fn node(rmse: f64, corr: Option<f64>) -> NodeMetrics {
        NodeMetrics { rmse, mae: rmse / 2.0, corr, n: 10 }
    }

    #[test]
    fn hand_values() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(mae(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 3.5);
        // sxy = 5, sxx = 2, syy = 38/3
        let r = corr(&[1.0, 2.0, 3.0], &[2.0, 4.0, 7.0]).unwrap().unwrap();
        assert!((r - 5.0 / (2.0f64 * 38.0 / 3.0).sqrt()).abs() < 1e-12);
        assert!((r - 0.993399267798783).abs() < 1e-12);
    }

    #[test]
    fn correlation_edges() {
        let t = [1.0, 5.0, 2.0, 8.0];
        assert!((corr(&t, &t).unwrap().unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = t.iter().map(|v| -v).collect();
        assert!((corr(&t, &neg).unwrap().unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(corr(&t, &[3.0; 4]).unwrap(), None);
        assert!(corr(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn bad_lengths() {
        assert!(rmse(&[], &[]).is_err());
        assert!(mae(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn aggregate_means_and_corr_exclusion() {
        let r = aggregate([(id("a"), node(10.0, None)), (id("b"), node(30.0, Some(0.5)))].into()).unwrap();
        assert_eq!(r.aggregate.rmse, 20.0);
        assert_eq!(r.aggregate.mae, 10.0);
        assert_eq!(r.aggregate.corr, Some(0.5));
        assert!(aggregate(BTreeMap::new()).is_err());
    }

    #[test]
    fn exclusion_recomputes_mean() {
        let r = aggregate(
            [
                (id("a"), node(10.0, None)),
                (id("b"), node(20.0, None)),
                (id("c"), node(90.0, None)),
            ]
            .into(),
        )
        .unwrap();
        assert_eq!(r.aggregate.rmse, 40.0);
        assert_eq!(r.without(&[id("c")]).unwrap().aggregate.rmse, 15.0);
        assert_eq!(r.without(&[]).unwrap(), r);
        assert!(r.without(&[id("zz")]).is_err());
    }

    #[test]
    fn report_csv_round_trip() {
        let r = aggregate([(id("a"), node(1.25, None)), (id("b"), node(3.0, Some(-0.25)))].into()).unwrap();
        let mut buf = Vec::new();
        write_report(&mut buf, &r).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text,
            "node,rmse,mae,corr,n\na,1.25,0.625,,10\nb,3.0,1.5,-0.25,10\nAGGREGATE,2.125,1.0625,-0.25,2\n"
        );
        assert_eq!(read_report(buf.as_slice()).unwrap(), r);
    }

    #[test]
    fn points_round_trip_and_score() {
        let pts = vec![
            PointPrediction { node: "a".into(), timestamp: "2019-11-04T06:00:00".into(), truth: 0.0, prediction: 3.0 },
            PointPrediction { node: "a".into(), timestamp: "2019-11-04T06:00:30".into(), truth: 0.0, prediction: 4.0 },
        ];
        let mut buf = Vec::new();
        write_points(&mut buf, &pts).unwrap();
        let back = read_points(buf.as_slice()).unwrap();
        assert_eq!(back, pts);
        let r = evaluate_points(&back).unwrap();
        assert_eq!(r.per_node[&id("a")].mae, 3.5);
        assert_eq!(r.per_node[&id("a")].corr, None);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
            (2usize..40).prop_flat_map(|n| {
                (
                    prop::collection::vec(-1e3f64..1e3, n),
                    prop::collection::vec(-1e3f64..1e3, n),
                )
            })
        }

        proptest! {
            #[test]
            fn norm_ordering((t, p) in pair()) {
                let r = rmse(&t, &p).unwrap();
                let a = mae(&t, &p).unwrap();
                let mx = t.iter().zip(&p).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                prop_assert!(a <= r * (1.0 + 1e-12) + 1e-12);
                prop_assert!(r <= mx * (1.0 + 1e-12) + 1e-12);
            }

            #[test]
            fn symmetry_and_affine((t, p) in pair(), a in 0.1f64..10.0, b in -50f64..50.0) {
                prop_assert!((rmse(&t, &p).unwrap() - rmse(&p, &t).unwrap()).abs() < 1e-9);
                prop_assert!((mae(&t, &p).unwrap() - mae(&p, &t).unwrap()).abs() < 1e-9);
                let ta: Vec<f64> = t.iter().map(|v| a * v + b).collect();
                let pa: Vec<f64> = p.iter().map(|v| a * v + b).collect();
                let r = rmse(&t, &p).unwrap();
                prop_assert!((rmse(&ta, &pa).unwrap() - a * r).abs() <= 1e-9 * (1.0 + a * r));
                if let (Some(c1), Some(c2)) = (corr(&t, &p).unwrap(), corr(&ta, &p).unwrap()) {
                    prop_assert!((c1 - c2).abs() < 1e-9);
                }
            }
        }
    }
}

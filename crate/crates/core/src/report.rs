//! Human-readable tables and SVG plots from result files.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::clock;
use crate::error::{Error, Result};
use crate::evaluation::{aggregate, EvaluationReport, NodeMetrics};
use crate::experiment_runner::{
    outlier_report_for, rank_summaries, Combination, OutlierReport, PredictionRow, ResultRow,
};
use crate::forecasters::ModelKind;
use crate::road_network::IntersectionId;
use crate::series_store::fmt_minutes;

pub const NO_RESULTS: &str = "no results";

fn num(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "n/a".into())
}

fn emph(text: String, best: bool) -> String {
    if best {
        format!("**{text}**")
    } else {
        text
    }
}

/// Best value in a column, compared at the two decimals shown.
fn best(values: impl Iterator<Item = Option<f64>>, higher: bool) -> Option<String> {
    let vals: Vec<f64> = values.flatten().collect();
    let pick = if higher {
        vals.into_iter().reduce(f64::max)
    } else {
        vals.into_iter().reduce(f64::min)
    };
    pick.map(|v| format!("{v:.2}"))
}

struct Cell<'a> {
    combo: Combination,
    model: ModelKind,
    row: &'a ResultRow,
}

/// One table per split: combination × model with RMSE, MAE and CORR. Rows
/// are grouped by interval, then sequence length, then horizon; the best
/// value of each metric column is in bold.
pub fn render_tables(rows: &[ResultRow]) -> Result<String> {
    let mut by_split: BTreeMap<&str, Vec<Cell>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.is_aggregate()) {
        by_split.entry(&r.split).or_default().push(Cell {
            combo: r.combination()?,
            model: r.model.parse()?,
            row: r,
        });
    }
    if by_split.is_empty() {
        return Ok(format!("{NO_RESULTS}\n"));
    }
    let mut out = String::new();
    for (split, mut cells) in by_split {
        cells.sort_by_key(|c| (c.combo, c.model));
        let best_rmse = best(cells.iter().map(|c| c.row.rmse), false);
        let best_mae = best(cells.iter().map(|c| c.row.mae), false);
        let best_corr = best(cells.iter().map(|c| c.row.corr), true);
        writeln!(out, "## Split {split}\n").unwrap();
        writeln!(out, "| Interval | Sequence | Horizon | Model | RMSE | MAE | CORR |").unwrap();
        writeln!(out, "|---|---|---|---|---:|---:|---:|").unwrap();
        let mut prev: Option<Combination> = None;
        for c in &cells {
            let p = prev.as_ref();
            let same_i = p.is_some_and(|p| p.interval_secs == c.combo.interval_secs);
            let same_s = same_i && p.is_some_and(|p| p.sequence_secs == c.combo.sequence_secs);
            let same_p = same_s && p.is_some_and(|p| p.prediction_secs == c.combo.prediction_secs);
            let label = |same: bool, secs: u32| if same { String::new() } else { format!("{} min", fmt_minutes(secs)) };
            let metric = |v: Option<f64>, b: &Option<String>| {
                let s = num(v);
                let is_best = v.is_some() && b.as_deref() == Some(s.as_str());
                emph(s, is_best)
            };
            writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} | {} |",
                label(same_i, c.combo.interval_secs),
                label(same_s, c.combo.sequence_secs),
                label(same_p, c.combo.prediction_secs),
                c.model,
                metric(c.row.rmse, &best_rmse),
                metric(c.row.mae, &best_mae),
                metric(c.row.corr, &best_corr),
            )
            .unwrap();
            prev = Some(c.combo);
        }
        out.push('\n');
    }
    Ok(out)
}

/// Top `k` combinations by mean RMSE then mean MAE across models.
pub fn render_ranking(rows: &[ResultRow], k: usize) -> Result<String> {
    let cells = rows
        .iter()
        .filter(|r| r.is_aggregate())
        .map(ResultRow::summary)
        .collect::<Result<Vec<_>>>()?;
    if cells.is_empty() {
        return Ok(format!("{NO_RESULTS}\n"));
    }
    let mut out = String::new();
    writeln!(out, "## Top {k} combinations\n").unwrap();
    writeln!(out, "| Rank | Combination | Mean RMSE | Mean MAE | Models |").unwrap();
    writeln!(out, "|---:|---|---:|---:|---|").unwrap();
    for (i, r) in rank_summaries(&cells).iter().take(k).enumerate() {
        let models: Vec<&str> = r.models.iter().map(|m| m.name()).collect();
        writeln!(
            out,
            "| {} | {} | {} | {} | {} |",
            i + 1,
            r.combination,
            num(r.avg_rmse),
            num(r.avg_mae),
            models.join(", ")
        )
        .unwrap();
    }
    out.push('\n');
    Ok(out)
}

/// Per-node reports rebuilt from the node rows of each evaluated cell.
pub fn cell_reports(rows: &[ResultRow]) -> Result<BTreeMap<(String, Combination, ModelKind), EvaluationReport>> {
    let mut nodes: BTreeMap<(String, Combination, ModelKind), BTreeMap<IntersectionId, NodeMetrics>> = BTreeMap::new();
    for r in rows.iter().filter(|r| !r.is_aggregate()) {
        let (Some(rmse), Some(mae)) = (r.rmse, r.mae) else { continue };
        nodes
            .entry((r.split.clone(), r.combination()?, r.model.parse()?))
            .or_default()
            .insert(IntersectionId::parse(&r.node)?, NodeMetrics { rmse, mae, corr: r.corr, n: r.n });
    }
    nodes.into_iter().map(|(k, v)| Ok((k, aggregate(v)?))).collect()
}

/// Aggregates before and after dropping `exclude`, for every cell that
/// contains all of them.
pub fn render_outliers(rows: &[ResultRow], exclude: &[IntersectionId]) -> Result<String> {
    let reports = cell_reports(rows)?;
    let mut out = String::new();
    let names: Vec<&str> = exclude.iter().map(|n| n.as_str()).collect();
    writeln!(out, "## Excluding {}\n", names.join(", ")).unwrap();
    writeln!(out, "| Split | Combination | Model | RMSE before | RMSE after | MAE before | MAE after | Excluded RMSE |").unwrap();
    writeln!(out, "|---|---|---|---:|---:|---:|---:|---|").unwrap();
    let mut any = false;
    for ((split, combo, model), rep) in &reports {
        if !exclude.iter().all(|n| rep.per_node.contains_key(n)) {
            continue;
        }
        let OutlierReport { before, after, excluded } = outlier_report_for(rep, exclude)?;
        let ex: Vec<String> = excluded.iter().map(|(n, m)| format!("{n} {:.2}", m.rmse)).collect();
        writeln!(
            out,
            "| {split} | {combo} | {model} | {:.2} | {:.2} | {:.2} | {:.2} | {} |",
            before.rmse,
            after.rmse,
            before.mae,
            after.mae,
            ex.join("; ")
        )
        .unwrap();
        any = true;
    }
    if !any {
        let missing: BTreeSet<&str> = names.iter().copied().collect();
        return Err(Error::UnknownNode(missing.into_iter().collect::<Vec<_>>().join(", ")));
    }
    out.push('\n');
    Ok(out)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Standalone SVG line chart of truth and prediction against time.
pub fn render_svg(title: &str, points: &[(i64, f64, f64)]) -> String {
    const W: f64 = 900.0;
    const H: f64 = 320.0;
    const PAD: f64 = 48.0;
    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();
    writeln!(svg, r#"<text x="{PAD}" y="20">{}</text>"#, escape(title)).unwrap();
    if !points.is_empty() {
        let (t0, t1) = (points[0].0, points[points.len() - 1].0.max(points[0].0 + 1));
        let lo = points.iter().map(|p| p.1.min(p.2)).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(|p| p.1.max(p.2)).fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 1.0, hi + 1.0) };
        let x = |t: i64| PAD + (t - t0) as f64 / (t1 - t0) as f64 * (W - 2.0 * PAD);
        let y = |v: f64| H - PAD - (v - lo) / (hi - lo) * (H - 2.0 * PAD);
        writeln!(
            svg,
            r##"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="#999"/>"##,
            W - 2.0 * PAD,
            H - 2.0 * PAD
        )
        .unwrap();
        writeln!(svg, r#"<text x="4" y="{:.1}">{hi:.0}</text>"#, PAD + 4.0).unwrap();
        writeln!(svg, r#"<text x="4" y="{:.1}">{lo:.0}</text>"#, H - PAD).unwrap();
        for (series, color, idx) in [("truth", "#1f77b4", 1), ("prediction", "#d62728", 2)] {
            let pts: Vec<String> = points
                .iter()
                .map(|p| {
                    let v = if idx == 1 { p.1 } else { p.2 };
                    format!("{:.1},{:.1}", x(p.0), y(v))
                })
                .collect();
            writeln!(
                svg,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{}"><title>{series}</title></polyline>"#,
                pts.join(" ")
            )
            .unwrap();
        }
        writeln!(svg, r##"<text x="{:.1}" y="20" fill="#1f77b4">truth</text>"##, W - 170.0).unwrap();
        writeln!(svg, r##"<text x="{:.1}" y="20" fill="#d62728">prediction</text>"##, W - 110.0).unwrap();
    }
    svg.push_str("</svg>\n");
    svg
}

fn file_stem(parts: &[&str]) -> String {
    parts
        .iter()
        .map(|p| {
            p.chars()
                .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
                .collect::<String>()
        })
        .collect::<Vec<_>>()
        .join("__")
}

/// One SVG per (split, combination, model, node) in `out_dir`.
pub fn write_plots(rows: &[PredictionRow], out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut groups: BTreeMap<(&str, &str, &str, &str, &str, &str), Vec<(i64, f64, f64)>> = BTreeMap::new();
    for r in rows {
        let t = clock::parse_iso(&r.timestamp)?;
        groups
            .entry((&r.split, &r.interval_min, &r.seq_min, &r.pred_min, &r.model, &r.node))
            .or_default()
            .push((t.and_utc().timestamp(), r.truth, r.prediction));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    for ((split, i, s, p, model, node), mut pts) in groups {
        pts.sort_by_key(|p| p.0);
        let title = format!("{node}: {model} at {i}min/{s}min/{p}min ({split})");
        let path = out_dir.join(format!("{}.svg", file_stem(&[split, i, s, p, model, node])));
        crate::io::atomic_write(&path, render_svg(&title, &pts).as_bytes())?;
        written.push(path);
    }
    Ok(written)
}

//! The timestamps × intersections intensity matrix and the transformations
//! that turn it into supervised learning data.

mod calendar;
mod window;

pub use calendar::{read_split, split_dates, split_days, write_split, CalendarSplit, SplitPolicy};
pub use window::{fmt_minutes, graph_features, minutes_to_secs, window, SampleGrid, WindowedDataset};

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Duration, NaiveDate, NaiveDateTime, NaiveTime};

use crate::clock::{self, BASE_CADENCE_SECS, DAY_START_SECS, DAY_WINDOW_SECS};
use crate::error::{Error, Result};
use crate::frame_extraction::{intersection_intensity, Aggregation, FrameObservation};
use crate::road_network::{IntersectionId, RoadNetwork};

/// Intensity per (timestamp, intersection); `None` marks a gap.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntensityMatrix {
    timestamps: Vec<NaiveDateTime>,
    columns: Vec<IntersectionId>,
    /// Row-major, `timestamps.len() * columns.len()` cells.
    values: Vec<Option<u64>>,
}

impl IntensityMatrix {
    pub fn new(
        timestamps: Vec<NaiveDateTime>,
        columns: Vec<IntersectionId>,
        values: Vec<Option<u64>>,
    ) -> Result<Self> {
        if values.len() != timestamps.len() * columns.len() {
            return Err(Error::Schema {
                column: "values".into(),
                message: format!(
                    "{} cells for {} rows x {} columns",
                    values.len(),
                    timestamps.len(),
                    columns.len()
                ),
            });
        }
        for pair in timestamps.windows(2) {
            if pair[0] >= pair[1] {
                return Err(if pair[0] == pair[1] {
                    Error::DuplicateTimestamp(pair[1])
                } else {
                    Error::Timestamp(format!("{} follows {}", pair[1], pair[0]))
                });
            }
        }
        if let Some(t) = timestamps.iter().find(|t| !clock::in_day_window(t)) {
            return Err(Error::Timestamp(format!(
                "{} lies outside the 06:00:00-23:59:59 window",
                clock::format_iso(t)
            )));
        }
        let mut seen = BTreeSet::new();
        for c in &columns {
            if !seen.insert(c) {
                return Err(Error::Schema {
                    column: c.to_string(),
                    message: "duplicate column".into(),
                });
            }
        }
        Ok(IntensityMatrix {
            timestamps,
            columns,
            values,
        })
    }

    pub fn empty(columns: Vec<IntersectionId>) -> Self {
        IntensityMatrix {
            timestamps: Vec::new(),
            columns,
            values: Vec::new(),
        }
    }

    pub fn rows(&self) -> usize {
        self.timestamps.len()
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn timestamps(&self) -> &[NaiveDateTime] {
        &self.timestamps
    }

    pub fn columns(&self) -> &[IntersectionId] {
        &self.columns
    }

    pub fn column_index(&self, node: &IntersectionId) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == node)
            .ok_or_else(|| Error::UnknownNode(node.to_string()))
    }

    pub fn get(&self, row: usize, col: usize) -> Option<u64> {
        self.values[row * self.columns.len() + col]
    }

    pub fn row(&self, row: usize) -> &[Option<u64>] {
        let w = self.columns.len();
        &self.values[row * w..(row + 1) * w]
    }

    pub fn column(&self, col: usize) -> impl Iterator<Item = Option<u64>> + '_ {
        (0..self.rows()).map(move |r| self.get(r, col))
    }

    /// Distinct calendar dates, ascending.
    pub fn dates(&self) -> Vec<NaiveDate> {
        let set: BTreeSet<_> = self.timestamps.iter().map(|t| t.date()).collect();
        set.into_iter().collect()
    }

    pub fn missing_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }

    fn select_rows(&self, keep: impl Fn(usize) -> bool) -> IntensityMatrix {
        let w = self.columns.len();
        let mut timestamps = Vec::new();
        let mut values = Vec::new();
        for (r, t) in self.timestamps.iter().enumerate() {
            if keep(r) {
                timestamps.push(*t);
                values.extend_from_slice(&self.values[r * w..(r + 1) * w]);
            }
        }
        IntensityMatrix {
            timestamps,
            columns: self.columns.clone(),
            values,
        }
    }

    /// Rows whose date is in `dates`.
    pub fn restrict_to_dates(&self, dates: &BTreeSet<NaiveDate>) -> IntensityMatrix {
        self.select_rows(|r| dates.contains(&self.timestamps[r].date()))
    }

    /// Snaps timestamps to the nearest `cadence_secs` grid instant and inserts
    /// missing rows for every absent grid instant of each date present.
    pub fn align_to_cadence(&self, cadence_secs: u32) -> Result<IntensityMatrix> {
        if cadence_secs == 0 || DAY_WINDOW_SECS % cadence_secs != 0 {
            return Err(Error::Interval(format!(
                "cadence {cadence_secs}s must divide the 18 h window"
            )));
        }
        let w = self.columns.len();
        let mut by_instant: BTreeMap<NaiveDateTime, &[Option<u64>]> = BTreeMap::new();
        for (r, t) in self.timestamps.iter().enumerate() {
            let off = clock::window_offset(t).unwrap_or(0);
            let slot = ((off + cadence_secs / 2) / cadence_secs).min(DAY_WINDOW_SECS / cadence_secs - 1);
            let snapped = t.date().and_time(NaiveTime::MIN)
                + Duration::seconds((DAY_START_SECS + slot * cadence_secs) as i64);
            if by_instant.insert(snapped, self.row(r)).is_some() {
                return Err(Error::DuplicateTimestamp(snapped));
            }
        }
        let mut timestamps = Vec::new();
        let mut values = Vec::new();
        for date in self.dates() {
            for t in clock::day_instants(date, cadence_secs) {
                match by_instant.get(&t) {
                    Some(row) => values.extend_from_slice(row),
                    None => values.extend(std::iter::repeat(None).take(w)),
                }
                timestamps.push(t);
            }
        }
        Ok(IntensityMatrix {
            timestamps,
            columns: self.columns.clone(),
            values,
        })
    }
}

/// One row per frame, one column per intersection (sorted by id).
pub fn assemble_matrix(
    frames: &[FrameObservation],
    net: &RoadNetwork,
    aggregation: Aggregation,
) -> Result<IntensityMatrix> {
    let columns = net.intersection_ids();
    let mut order: Vec<&FrameObservation> = frames.iter().collect();
    order.sort_by_key(|f| f.timestamp);
    for pair in order.windows(2) {
        if pair[0].timestamp == pair[1].timestamp {
            return Err(Error::DuplicateTimestamp(pair[0].timestamp));
        }
    }
    let mut values = Vec::with_capacity(order.len() * columns.len());
    for f in &order {
        for node in &columns {
            values.push(Some(intersection_intensity(f, net, node, aggregation)?));
        }
    }
    IntensityMatrix::new(order.iter().map(|f| f.timestamp).collect(), columns, values)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Resampling {
    /// Keep the value at each sampling instant.
    #[default]
    Decimate,
    /// Rounded mean of the present values in `[t, t + interval)`.
    Mean,
}

impl std::str::FromStr for Resampling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "decimate" => Ok(Resampling::Decimate),
            "mean" => Ok(Resampling::Mean),
            other => Err(Error::Config(format!("resampling must be decimate|mean, got {other:?}"))),
        }
    }
}

pub fn resample(m: &IntensityMatrix, interval_secs: u32) -> Result<IntensityMatrix> {
    resample_with(m, interval_secs, Resampling::Decimate)
}

pub fn resample_with(m: &IntensityMatrix, interval_secs: u32, how: Resampling) -> Result<IntensityMatrix> {
    if interval_secs == 0 || interval_secs % BASE_CADENCE_SECS != 0 {
        return Err(Error::Interval(format!(
            "{interval_secs}s is not a positive multiple of the {BASE_CADENCE_SECS}s base cadence"
        )));
    }
    let on_grid = |t: &NaiveDateTime| {
        clock::window_offset(t)
            .map(|o| o % interval_secs == 0)
            .unwrap_or(false)
    };
    match how {
        Resampling::Decimate => Ok(m.select_rows(|r| on_grid(&m.timestamps[r]))),
        Resampling::Mean => {
            let w = m.width();
            let mut groups: BTreeMap<NaiveDateTime, Vec<usize>> = BTreeMap::new();
            for (r, t) in m.timestamps.iter().enumerate() {
                let off = clock::window_offset(t).unwrap_or(0);
                let anchor = *t - Duration::seconds((off % interval_secs) as i64);
                groups.entry(anchor).or_default().push(r);
            }
            let mut timestamps = Vec::with_capacity(groups.len());
            let mut values = Vec::with_capacity(groups.len() * w);
            for (anchor, rows) in groups {
                timestamps.push(anchor);
                for c in 0..w {
                    let present: Vec<u64> = rows.iter().filter_map(|&r| m.get(r, c)).collect();
                    values.push(if present.is_empty() {
                        None
                    } else {
                        let n = present.len() as u64;
                        Some((present.iter().sum::<u64>() + n / 2) / n)
                    });
                }
            }
            Ok(IntensityMatrix {
                timestamps,
                columns: m.columns.clone(),
                values,
            })
        }
    }
}

pub fn write_matrix<W: Write>(writer: W, m: &IntensityMatrix) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    let mut header = vec!["timestamp".to_string()];
    header.extend(m.columns.iter().map(|c| c.to_string()));
    w.write_record(&header)?;
    let mut rec = Vec::with_capacity(header.len());
    for (r, t) in m.timestamps.iter().enumerate() {
        rec.clear();
        rec.push(clock::format_iso(t));
        rec.extend(m.row(r).iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<matrix>", e))?;
    Ok(())
}

pub fn read_matrix<R: Read>(reader: R) -> Result<IntensityMatrix> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.get(0) != Some("timestamp") {
        return Err(Error::Schema {
            column: "timestamp".into(),
            message: "first column must be `timestamp`".into(),
        });
    }
    let columns = headers
        .iter()
        .skip(1)
        .map(IntersectionId::parse)
        .collect::<Result<Vec<_>>>()?;
    let mut timestamps = Vec::new();
    let mut values = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        timestamps.push(clock::parse_iso(&rec[0])?);
        for (i, cell) in rec.iter().skip(1).enumerate() {
            let cell = cell.trim();
            values.push(if cell.is_empty() {
                None
            } else {
                Some(cell.parse::<u64>().map_err(|_| Error::Schema {
                    column: columns[i].to_string(),
                    message: format!("not a non-negative integer: {cell:?}"),
                })?)
            });
        }
    }
    IntensityMatrix::new(timestamps, columns, values)
}

pub fn read_matrix_file(path: &Path) -> Result<IntensityMatrix> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_matrix(std::io::BufReader::new(f))
}

pub fn write_matrix_file(path: &Path, m: &IntensityMatrix) -> Result<()> {
    crate::io::atomic_write_with(path, |buf| write_matrix(buf, m))
}

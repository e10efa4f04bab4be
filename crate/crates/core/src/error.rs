use std::path::PathBuf;

use chrono::{NaiveDate, NaiveDateTime};
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("missing input: {0}")]
    MissingInput(String),

    #[error("registry row {row}: {message}")]
    Registry { row: usize, message: String },

    #[error("segment {segment}: color {color} does not occur in the mask")]
    ColorNotInMask { segment: String, color: String },

    #[error("malformed intersection id {0:?}")]
    InvalidId(String),

    #[error("unknown intersection {0:?}")]
    UnknownNode(String),

    #[error("segment {0:?} missing from frame")]
    MissingSegment(String),

    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    Dimension {
        expected: (u32, u32),
        found: (u32, u32),
    },

    #[error("bad timestamp {0:?}")]
    Timestamp(String),

    #[error("invalid palette: {0}")]
    Palette(String),

    #[error("duplicate timestamp {0}")]
    DuplicateTimestamp(NaiveDateTime),

    #[error("invalid interval: {0}")]
    Interval(String),

    #[error("invalid sample grid: {0}")]
    Grid(String),

    #[error("split: {0}")]
    Split(String),

    #[error("dates missing from matrix: {}", fmt_dates(.0))]
    MissingDates(Vec<NaiveDate>),

    #[error("{0}")]
    InsufficientData(String),

    #[error("schema error in column {column:?}: {message}")]
    Schema { column: String, message: String },

    #[error("config: {0}")]
    Config(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("solver did not converge after {iterations} iterations (max KKT violation {violation:.3e})")]
    NotConverged { iterations: usize, violation: f64 },

    #[error("fit aborted after {elapsed_ms} ms (budget exceeded)")]
    Timeout { elapsed_ms: u128 },

    #[error("model: {0}")]
    Model(String),

    #[error("metric: {0}")]
    Metric(String),
}

fn fmt_dates(dates: &[NaiveDate]) -> String {
    dates
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

impl Error {
    /// I/O failure tagged with the offending path.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 2,
            Error::MissingInput(_) | Error::Config(_) => 2,
            Error::Schema { .. } | Error::Csv(_) => 4,
            Error::Degenerate(_) | Error::NotConverged { .. } | Error::Timeout { .. } => 5,
            _ => 3,
        }
    }
}

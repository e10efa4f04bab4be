//! Traffic-layer image extraction, intensity series and congestion
//! forecasting benchmarks.

pub mod clock;
pub mod color;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod experiment_runner;
pub mod forecasters;
pub mod frame_extraction;
pub mod io;
pub mod report;
pub mod road_network;
pub mod series_store;
pub mod synth_oracle;

pub use error::{Error, Result};

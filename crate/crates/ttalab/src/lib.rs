//! Run configuration, file formats, tables, loss surfaces and the benchmark
//! runner on top of `ttalab-core`.

pub mod config;
pub mod error;
pub mod io;
pub mod metrics;
pub mod runner;
pub mod surface;
pub mod table;

pub use config::RunConfig;
pub use error::{HarnessError, Result};
pub use metrics::MetricsRecord;

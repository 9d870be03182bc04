//! Benchmark harness for multi-state network discovery: matrix ingestion,
//! scenario sweeps over all methods, result records, aggregates and plot
//! data, and single-dataset fits with their artifacts.

pub mod config;
pub mod dataset;
pub mod error;
pub mod ingest;
pub mod records;
pub mod run;

pub use config::{Method, MnglOptions, RunConfig};
pub use error::{BenchError, Result};
pub use records::{Metrics, ResultRecord};

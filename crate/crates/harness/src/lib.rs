//! Experiment harness around the `seqcopy` library: configuration files,
//! deterministic seeded sweeps over strategies and thresholds, aggregation
//! across repetitions, and report emission.

pub mod config;
pub mod error;
pub mod experiment;
pub mod report;

pub use error::{Error, Result};

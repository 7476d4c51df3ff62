//! Copying a black-box hard-label classifier into a small neural network by
//! alternating sample synthesis with memory-aware training.
//!
//! The pipeline: `datagen` builds toy problems and samplers, `oracle` wraps
//! the original model behind a hard-label interface, `copynet` holds the copy
//! network and its capacity-controlled trainer, `engine` runs the sequential
//! copying strategies, and `metrics` scores the resulting runs.

pub mod copynet;
pub mod datagen;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod oracle;
mod util;

pub use error::{Error, Result};

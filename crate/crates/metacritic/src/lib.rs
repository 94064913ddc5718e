//! Experiment harness for meta-critic learning: configuration, experiment
//! suites, result files, checkpoints and task sets.

pub mod checkpoint;
pub mod config;
mod error;
pub mod records;
pub mod stats;
pub mod suites;
pub mod taskset;

pub use error::{HarnessError, Result};

//! Experiment harness for the semantic transmission pipeline: image I/O,
//! configuration, training, sweeps, plots and benchmarks.

pub mod bench;
pub mod config;
pub mod corpus;
pub mod error;
pub mod plot;
pub mod ppm;
pub mod seed;
pub mod sweep;
pub mod train;

pub use error::{HarnessError, Result};

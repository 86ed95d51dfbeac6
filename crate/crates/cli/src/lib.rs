//! Experiment orchestration for switching latent force identification of
//! stick-slip oscillators.

pub mod config;
pub mod data;
pub mod error;
pub mod pipeline;
pub mod report;
pub mod sweep;

pub use config::ExperimentConfig;
pub use error::{CliError, Result};
pub use pipeline::{run_experiment, ExperimentOutput, Report};
pub use sweep::{run_sweep, SweepAxis, SweepTable};

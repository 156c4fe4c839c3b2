//! Experiment runner for `smc2-core`: simulate data, run a sampler and
//! write diagnostics, particle dumps and a summary.

pub mod config;
pub mod data;
pub mod error;
pub mod run;

pub use config::{Algorithm, ExperimentConfig};
pub use error::{CliError, CliResult};
pub use run::{run, simulate_data};

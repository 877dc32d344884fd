//! Experiment runner for the `adherence` model: configuration, dispatch and
//! CSV/JSON artifact emission.

pub mod config;
mod error;
pub mod run;

pub use config::{Experiment, ExperimentConfig, Format};
pub use error::CliError;
pub use run::{load_manifest, run_experiment, RunOutcome, MANIFEST};

//! Config-driven experiment runner: builds the target channel and training
//! data, trains a dilation with the configured methods and exports the
//! results.

pub mod config;
pub mod export;
pub mod presets;
pub mod run;

pub use config::{ConfigError, ExperimentConfig, Method};
pub use export::{export, Manifest};
pub use run::{run, run_method, RunError, RunRecord};

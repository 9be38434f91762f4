//! Experiment harness around `nsvb-core`: excitation data from the PEMFC
//! cooling-loop simulator, model fitting, one-step validation and
//! closed-loop NSVB-MPC runs.

pub mod config;
pub mod data;
pub mod error;
pub mod pipeline;
pub mod sweep;

pub use config::ExperimentConfig;
pub use error::CliError;

//! Experiment harness: plans, target preparation, reconstruction runs and
//! the artifacts they leave on disk.

pub mod commands;
pub mod error;
pub mod plan;

pub use error::{CliError, CliResult};
pub use plan::{load_plan, parse_plan, ExperimentPlan};

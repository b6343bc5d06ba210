//! Command-line pipelines over the `dyntomo` toolkit: simulate a scan,
//! subsample it, reconstruct with FBP, PDFP or L+S, and score the result.

pub mod angles;
pub mod commands;
pub mod config;
pub mod error;
pub mod preview;

pub use commands::{
    cmd_metrics, cmd_reconstruct, cmd_simulate, cmd_subsample, Algorithm, ReconOutcome, ReconstructOptions,
    SimulateOptions, SimulateOutcome,
};
pub use config::RunConfig;
pub use error::CliError;

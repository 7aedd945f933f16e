//! Experiment runner: declarative sweeps over the FAS-RIS models, emitted as
//! plot-ready CSV or JSON tables.

pub mod experiment;
pub mod run;
pub mod table;

pub use experiment::{Experiment, Kind, ModelSpec, SolverSpec, Sweep, SweepVar};
pub use run::{columns, run_experiment, RunOptions};
pub use table::{Format, Table};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    /// Process exit code: 2 for numeric failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numeric(_) => 2,
            _ => 1,
        }
    }
}

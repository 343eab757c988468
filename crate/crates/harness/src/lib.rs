//! Experiment harness for the `shufflevr` optimizers: JSON manifests, seed
//! sweeps, stepsize grids, property suites and CSV traces.

pub mod compare;
pub mod config;
pub mod csv;
pub mod experiment;
pub mod verify;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("usage: {0}")]
    Usage(String),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error(transparent)]
    Problem(#[from] shufflevr::problem::ProblemError),
    #[error("optimum: {0}")]
    Oracle(#[from] shufflevr::oracle::OracleError),
    #[error("run failed: {0}")]
    Run(String),
    #[error("output: {0}")]
    Output(String),
}

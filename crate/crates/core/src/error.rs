use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the simulation, spectral and verification layers.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain where an operation is defined.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Configuration failed validation; `key` is the dotted path of the offending field.
    #[error("invalid config at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("iteration did not converge after {iterations} iterations (residuals: {history:?})")]
    Convergence {
        iterations: usize,
        history: Vec<f64>,
    },

    /// Too few trajectories survived to form an estimate.
    #[error("only {survivors} survivors of {samples} samples at t = {time}; increase samples or reduce t")]
    Starvation {
        survivors: usize,
        samples: usize,
        time: f64,
    },

    #[error("particle system extinct: all {particles} particles absorbed in one step at t = {time}")]
    Extinction { particles: usize, time: f64 },

    #[error("mismatched inputs: {0}")]
    Mismatch(String),

    #[error("non-finite value in output record: {0}")]
    NonFinite(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

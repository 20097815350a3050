use thiserror::Error;

/// Errors raised by the channel, precoding and optimization routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("{solver} did not converge within {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("power allocation infeasible: spectral radius {0} >= 1")]
    Infeasible(f64),

    #[error("degenerate point: {0}")]
    Degenerate(String),

    #[error("line search stalled at iteration {iteration} after {shrinks} step reductions")]
    Stall { iteration: usize, shrinks: usize },

    #[error("realization {index}: {source}")]
    Realization { index: usize, source: Box<Error> },

    #[error("all {attempts} restarts failed; first failure: {first}")]
    AllRestartsFailed { attempts: usize, first: Box<Error> },

    #[error("configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

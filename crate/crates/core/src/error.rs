use thiserror::Error;

use crate::coupling::Coupling;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid coupling: {0}")]
    InvalidCoupling(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("marginal mismatch: {0}")]
    MarginalMismatch(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The requested object would exceed the size cap of the exact routines.
    #[error("resource limit: {0}")]
    Resource(String),

    /// A refinement sequence did not stabilize before its depth cap.
    #[error("{what} did not stabilize by depth {depth} (last value {last})")]
    Diverged {
        what: &'static str,
        depth: u32,
        last: f64,
    },

    /// Products of quantile couplings did not stabilize before `max_depth`.
    /// Carries the last two iterates.
    #[error("markov-quantile coupling not converged at depth {depth} (cdf distance {distance})")]
    MqNotConverged {
        depth: u32,
        distance: f64,
        previous: Box<Coupling>,
        last: Box<Coupling>,
    },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("usage: {0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

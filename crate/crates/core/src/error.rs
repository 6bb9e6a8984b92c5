use thiserror::Error;

/// Errors raised by models, filters and experiment drivers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FilterError {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("matrix is not positive semidefinite ({context})")]
    NotPositiveSemidefinite { context: &'static str },

    #[error("singular matrix ({context})")]
    Singular { context: &'static str },

    #[error("singular matrix ({context}) in run {run} at time {time}")]
    SingularAt {
        context: &'static str,
        run: usize,
        time: usize,
    },

    #[error("non-finite value produced by {context} at time {time}")]
    NonFinite { context: &'static str, time: usize },

    #[error("forward filter diverged at time {time}: {reason}")]
    Divergence { time: usize, reason: String },

    #[error("zero total likelihood at time {time}")]
    ZeroLikelihood { time: usize },

    #[error("forward step failed for particle {particle} at time {time}: {source}")]
    Particle {
        particle: usize,
        time: usize,
        #[source]
        source: Box<FilterError>,
    },

    #[error(
        "modification threshold unreachable at time {time} after {attempts} attempts \
         (mean likelihood {mean_likelihood:e} < gamma {gamma:e}); lower gamma or raise the particle count"
    )]
    ThresholdUnreachable {
        time: usize,
        attempts: u32,
        mean_likelihood: f64,
        gamma: f64,
    },

    #[error("ensemble is in the {actual:?} phase, expected {expected:?}")]
    Phase {
        expected: crate::inverse::Phase,
        actual: crate::inverse::Phase,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{failed} of {total} Monte Carlo runs failed (first failure: {first})")]
    TooManyFailures {
        failed: usize,
        total: usize,
        first: String,
    },
}

/// Configuration validation error naming the offending key.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{key}: {message}")]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = FilterError> = std::result::Result<T, E>;

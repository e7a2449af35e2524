use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("integration failed at step {step}: {reason} (state = {state:?})")]
    Integration {
        step: usize,
        state: Vec<f64>,
        reason: String,
    },

    #[error("training produced a non-finite loss at iteration {iteration}")]
    Training { iteration: usize },

    #[error("trajectory {trajectory} failed: {source}")]
    Trajectory {
        trajectory: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("internal consistency error: {0}")]
    Internal(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

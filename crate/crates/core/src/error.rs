use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Inconsistent dimensions or invalid settings supplied by the caller's configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// An API was called in a way its contract forbids.
    #[error("usage error: {0}")]
    Usage(String),

    /// Malformed input data (non-increasing grids, unparsable rows, ...).
    #[error("data error: {0}")]
    Data(String),

    #[error("non-finite gradient in layer {layer}")]
    NonFiniteGradient { layer: usize },

    #[error("training error at stage {stage}, step {step}: {reason}")]
    Training {
        stage: usize,
        step: usize,
        reason: String,
        trace: Vec<f64>,
    },

    #[error("simulation error at stage {stage}, node {node}, particle (n1={n1}, n2={n2}): {reason}")]
    Simulation {
        stage: usize,
        node: usize,
        n1: usize,
        n2: usize,
        reason: String,
    },

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

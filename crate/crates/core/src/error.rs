use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("infeasible mix: {0}")]
    InfeasibleSpec(String),

    #[error("ill-conditioned channel (condition number {condition:.3e})")]
    IllConditioned { condition: f64 },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// EVM of exactly zero maps to an infinite predicted SINR.
    #[error("unbounded SINR prediction (EVM is zero)")]
    UnboundedPrediction,

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}

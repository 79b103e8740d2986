use thiserror::Error;

/// Errors surfaced by the library. Configuration problems are collected so a
/// bad config reports every violation at once instead of one per run.
#[derive(Debug, Error)]
pub enum QdError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error:\n{}", .0.join("\n"))]
    Config(Vec<String>),

    #[error("archive is empty")]
    EmptyArchive,

    #[error("metric configuration error: {0}")]
    MetricConfig(String),

    #[error("gradient unavailable: {0}")]
    GradientUnavailable(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("evaluation failed at batch index {index}: {message}")]
    Evaluation { index: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },
}

impl QdError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        QdError::InvalidInput(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        QdError::Config(vec![msg.into()])
    }

    pub fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        QdError::Parse {
            context: context.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, QdError>;

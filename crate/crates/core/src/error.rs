use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid score: {0}")]
    Validation(String),

    #[error("midi parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("json error at {path}: {message}")]
    Json { path: String, message: String },

    #[error("{field} index {value} out of range at position {position}")]
    Vocab {
        field: &'static str,
        position: usize,
        value: usize,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("budget violation: {0}")]
    Budget(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-parsable category, stable across releases.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Validation(_) => "validation",
            Error::Parse { .. } => "parse",
            Error::Json { .. } => "json",
            Error::Vocab { .. } => "vocab",
            Error::Shape(_) => "shape",
            Error::Budget(_) => "budget",
            Error::Config(_) => "config",
            Error::Checkpoint(_) => "checkpoint",
            Error::Divergence(_) => "divergence",
            Error::Io(_) => "io",
        }
    }
}

use std::io;

use thiserror::Error;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum DoaError {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Array or vector dimensions do not agree.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// The requested configuration cannot be satisfied.
    #[error("configuration error: {0}")]
    Config(String),

    /// An iterative routine diverged or produced non-finite values.
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    /// Wraps another error with the experiment step it occurred in.
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<DoaError>,
    },
}

impl DoaError {
    pub fn context(self, context: impl Into<String>) -> Self {
        DoaError::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping any context wrappers.
    pub fn root(&self) -> &DoaError {
        match self {
            DoaError::Context { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for numeric failures (diverged training, non-convergent eigen solver).
    pub fn is_numeric(&self) -> bool {
        matches!(self.root(), DoaError::Numeric(_))
    }
}

pub type Result<T, E = DoaError> = std::result::Result<T, E>;

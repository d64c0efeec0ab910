use std::path::PathBuf;

use crate::provider::ProviderError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot ingest {path}: {message}")]
    Ingest { path: PathBuf, message: String },

    #[error("record {index}: {message}")]
    Record { index: usize, message: String },

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("index error: {0}")]
    Index(String),

    #[error("query error: {0}")]
    Query(String),

    #[error("cannot load {path}: {message}")]
    Load { path: PathBuf, message: String },

    #[error("step {step} failed: {source}")]
    Step {
        step: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error(transparent)]
    Provider(#[from] ProviderError),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable category, printed by the CLI on failure.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Ingest { .. } | Error::Record { .. } => "ingest",
            Error::Alignment(_) => "alignment",
            Error::InvalidInput(_) => "invalid_input",
            Error::Config(_) => "config",
            Error::Index(_) => "index",
            Error::Query(_) => "query",
            Error::Load { .. } => "load",
            Error::Step { source, .. } => source.category(),
            Error::Eval(_) => "eval",
            Error::Provider(_) => "provider",
            Error::Io(_) => "io",
            Error::Json(_) | Error::Csv(_) => "format",
        }
    }

    pub(crate) fn at_step(self, step: &'static str) -> Error {
        Error::Step {
            step,
            source: Box::new(self),
        }
    }
}

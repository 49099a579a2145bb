use std::path::PathBuf;

/// Errors produced anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("format error at line {line}: {msg}")]
    Format { line: usize, msg: String },

    #[error("model file error: {0}")]
    ModelFormat(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("batch-size error: {0}")]
    BatchSize(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("stratification error: {0}")]
    Stratification(String),

    #[error("modality error: {0}")]
    Modality(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("leakage error: {0}")]
    Leakage(String),

    #[error("metric undefined: {0}")]
    MetricUndefined(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(line: usize, msg: impl Into<String>) -> Self {
        Error::Format { line, msg: msg.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid size: {0}")]
    InvalidSize(String),

    #[error("step size {value} out of range: must satisfy {bound}")]
    StepSize { value: f64, bound: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("graph is not connected ({components} components)")]
    Disconnected { components: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical degeneracy at round {round}, node {node}: {message}")]
    Degenerate {
        round: usize,
        /// 1-based node label.
        node: usize,
        message: String,
    },

    #[error("invalid model: {0}")]
    Model(String),

    #[error("observation error: {0}")]
    Observation(String),

    #[error("state error: {0}")]
    State(String),

    #[error("undefined: {0}")]
    Undefined(String),

    #[error("configuration error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable code, used by the CLI's error line.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidSize(_) => "invalid-size",
            Error::StepSize { .. } => "step-size",
            Error::Dimension { .. } => "dimension",
            Error::Parameter(_) => "parameter",
            Error::Disconnected { .. } => "connectivity",
            Error::Parse { .. } => "parse",
            Error::Domain(_) => "domain",
            Error::Degenerate { .. } => "degenerate",
            Error::Model(_) => "model",
            Error::Observation(_) => "observation",
            Error::State(_) => "state",
            Error::Undefined(_) => "undefined",
            Error::Config { .. } => "config",
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
        }
    }

    pub fn config(field: &str, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.to_string(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}

use std::path::{Path, PathBuf};

use thiserror::Error;

/// Errors raised by training, prediction and file handling.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("both classes must be present (got only label {0:+})")]
    SingleClass(i8),

    #[error("kernel matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },

    #[error("no discriminable bins: every bin has zero same-class scatter")]
    NoDiscriminableBins,

    #[error("dual solver did not converge at outer iteration {iteration} ({updates} pair updates)")]
    NotConverged { iteration: usize, updates: usize },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{0}")]
    Model(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-parsable category used by the CLI and the C ABI.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Dimension { .. } => "dimension",
            Error::Domain(_) => "domain",
            Error::Input(_) | Error::SingleClass(_) | Error::NoDiscriminableBins => "input",
            Error::NotSymmetric { .. } => "input",
            Error::NotConverged { .. } => "solver",
            Error::Parse { .. } => "parse",
            Error::Model(_) | Error::Json(_) => "model",
            Error::Io(_) | Error::File { .. } => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })
}

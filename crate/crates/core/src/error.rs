use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A feature cell could not be read as a real number. Row and column are zero-based
    /// and count data rows only (a header line is not counted).
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("format error: {0}")]
    Format(String),

    /// Input is well formed but violates a precondition (single class, too few members
    /// per fold, non-normalized distribution, ...).
    #[error("validation error: {0}")]
    Validation(String),

    /// Array shapes do not line up.
    #[error("shape error: {0}")]
    Shape(String),

    /// API misuse, e.g. a forward cache that does not belong to the parameters.
    #[error("contract error: {0}")]
    Contract(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch} (reconstruction {reconstruction}, penalty {penalty})")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        reconstruction: f64,
        penalty: f64,
    },

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input rather than a failure while running.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Parse { .. }
            | Error::Format(_)
            | Error::Validation(_)
            | Error::Config(_)
            | Error::Csv(_) => true,
            Error::Fold { source, .. } => source.is_input_error(),
            _ => false,
        }
    }
}

use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid configuration; `field` is a dotted path into the config when known.
    #[error("configuration error at `{field}`: {message}")]
    Config { field: String, message: String },

    /// An operation was called outside its contract.
    #[error("usage error: {0}")]
    Usage(String),

    /// Cholesky breakdown. Cannot happen for a valid kernel with `lambda > 0`.
    #[error("numerical error: non-positive pivot {pivot:e} at row {row} of a {size}x{size} system (lambda = {lambda})")]
    Cholesky {
        row: usize,
        size: usize,
        pivot: f64,
        lambda: f64,
    },

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
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Error::Usage(message.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

use thiserror::Error;

/// Crate-wide error type. Variants are grouped by what went wrong rather
/// than where, so callers (and the CLI exit-code table) can classify
/// failures without string matching.
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes or extents that cannot be combined. Always names both sides.
    #[error("dimension mismatch: {0}")]
    Dim(String),

    /// Invalid or inconsistent configuration (unknown task, bad hyperparameter,
    /// checkpoint/config disagreement).
    #[error("configuration error: {0}")]
    Config(String),

    /// A documented precondition was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A sequence exceeded a fixed capacity (e.g. the positional table).
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// A numeric verification failed (gradient check, non-finite loss).
    #[error("numeric check failed: {0}")]
    Numeric(String),

    /// Malformed or inconsistent data on disk (missing counterpart image,
    /// truncated container, unparsable manifest).
    #[error("data error: {0}")]
    Data(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

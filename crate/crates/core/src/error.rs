use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A geometric precondition was violated (zero or negative distance).
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    /// Vector or tensor dimensions do not line up.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A configuration field is out of its documented range.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A data file does not follow its schema; `field` names the first
    /// offending record.
    #[error("schema violation in {path}: {field}: {detail}")]
    Schema {
        path: PathBuf,
        field: String,
        detail: String,
    },

    /// A node id that is not present in the snapshot.
    #[error("unknown node id {0}")]
    UnknownNode(usize),

    /// A dataset split or tau bucket required by an operation is missing.
    #[error("missing data: {0}")]
    MissingData(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn schema(path: impl Into<PathBuf>, field: &str, detail: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            field: field.to_string(),
            detail: detail.into(),
        }
    }
}

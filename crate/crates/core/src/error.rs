use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed CSV: {0}")]
    Csv(String),

    #[error("row {row}, column '{column}': cannot parse '{value}' as a finite number")]
    BadCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("label column '{0}' not found in header")]
    MissingLabelColumn(String),

    #[error("need at least 2 distinct labels, found {0}")]
    TooFewLabels(usize),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("class '{label}' has {count} members but {needed} are required")]
    ClassTooSmall {
        label: String,
        count: usize,
        needed: usize,
    },

    #[error("classes absent from data: {}", .0.join(", "))]
    MissingClasses(Vec<String>),

    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    Divergence { epoch: usize },

    #[error("model fingerprint {model} does not match calibration table fingerprint {table}")]
    FingerprintMismatch { model: String, table: String },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("label index {index} out of range for {count} labels")]
    LabelOutOfRange { index: usize, count: usize },

    #[error("unknown label '{0}'")]
    UnknownLabel(String),

    #[error("instance '{0}' not found")]
    IdNotFound(String),

    #[error("instance '{id}' is not a rejection: prediction set {{{set}}} is nonempty")]
    NotARejection { id: String, set: String },

    #[error("singular normal equations in surrogate fit")]
    Singular,

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// True for errors caused by numerical failure rather than bad input.
    pub fn is_internal(&self) -> bool {
        matches!(self, Error::Divergence { .. } | Error::Singular)
    }
}

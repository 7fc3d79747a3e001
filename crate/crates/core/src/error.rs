use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: row {row}: unknown label {value:?}")]
    UnknownLabel {
        path: PathBuf,
        row: usize,
        value: String,
    },

    #[error("{path}: row {row}: duplicate id {id:?}")]
    DuplicateId { path: PathBuf, row: usize, id: String },

    #[error("{path}: row {row}: missing required field `{field}`")]
    MissingField {
        path: PathBuf,
        row: usize,
        field: &'static str,
    },

    #[error("{path}: row {row}: {message}")]
    MalformedRow {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("vocabulary is empty after applying min_df={min_df} to {n_docs} documents")]
    EmptyVocabulary { min_df: u32, n_docs: usize },

    #[error("training diverged at epoch {epoch}: loss {loss} (initial {initial})")]
    Diverged { epoch: usize, loss: f64, initial: f64 },

    #[error("model file {path}: unsupported format version {found} (expected {expected})")]
    VersionMismatch {
        path: PathBuf,
        found: String,
        expected: u32,
    },

    #[error("model file {path}: checksum mismatch (file truncated or corrupted)")]
    ChecksumMismatch { path: PathBuf },

    #[error("predictions {path}: {message}")]
    Predictions { path: PathBuf, message: String },

    #[error("predictions {path}: corpus id {id:?} has no prediction")]
    MissingPrediction { path: PathBuf, id: String },

    #[error("split failed: {0}")]
    Split(String),

    #[error("evaluation failed: {0}")]
    Eval(String),

    #[error("grid search failed: {0}")]
    Tuning(String),

    #[error("run failed: {0}")]
    Run(String),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

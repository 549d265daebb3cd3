use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch in {dim}: expected {expected}, found {found}")]
    ShapeMismatch {
        op: &'static str,
        dim: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("{op}: expected a rank-{expected} tensor, found rank {found}")]
    Rank {
        op: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("tensor data length {found} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, found: usize },

    #[error("layer `{layer}`: backward called before forward")]
    BackwardBeforeForward { layer: String },

    #[error("layer `{layer}`: inference requires batch-norm moving statistics, none recorded")]
    MissingStatistics { layer: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(#[from] CheckpointError),

    #[error("unknown bridge subtype `{0}`")]
    UnknownSubtype(String),

    #[error("label {0} has no samples")]
    EmptyClass(u8),

    #[error("dataset entry `{path}`: {reason}")]
    DatasetEntry { path: PathBuf, reason: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec: {0}")]
    Image(#[from] image::ImageError),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad magic bytes, not a checkpoint file")]
    BadMagic,
    #[error("unsupported format version {found} (this build reads {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },
    #[error("file truncated while reading {what}")]
    Truncated { what: &'static str },
    #[error("array `{name}` has shape {found:?}, profile expects {expected:?}")]
    ShapeDisagreement {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("array `{0}` missing from checkpoint")]
    MissingArray(String),
    #[error("unexpected array `{0}` in checkpoint")]
    UnexpectedArray(String),
    #[error("unsupported dtype tag {0}")]
    Dtype(u8),
    #[error("malformed header: {0}")]
    Header(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

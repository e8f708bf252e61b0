use std::path::PathBuf;

use thiserror::Error;

use crate::feature_store::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: manifest missing")]
    ManifestMissing { path: PathBuf },

    #[error("{path}: malformed manifest: {message}")]
    Manifest { path: PathBuf, message: String },

    #[error("{path}: unknown format_version {version}")]
    UnsupportedVersion { path: PathBuf, version: u32 },

    #[error("{path}: tensor file missing")]
    TensorMissing { path: PathBuf },

    #[error("{path}: shape mismatch: declared {expected} bytes, found {actual}")]
    ShapeMismatch {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("{path}: checksum mismatch: manifest {expected}, contents {actual}")]
    ChecksumMismatch {
        path: PathBuf,
        expected: String,
        actual: String,
    },

    #[error("invalid feature set: {}", join_violations(.0))]
    Invalid(Vec<Violation>),

    #[error("class {class} has no samples")]
    EmptyClass { class: usize },

    #[error("classification scoring needs at least 2 classes, got {0}")]
    TooFewClasses(usize),

    #[error("feature set has no box targets")]
    MissingBoxes,

    #[error("holdout split leaves {test} test samples, need at least 2")]
    HoldoutTooSmall { test: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("within-class scatter is not positive definite after regularization")]
    Cholesky,

    #[error("evidence is not finite (degenerate features or target)")]
    NonFiniteEvidence,

    #[error("no samples")]
    NoSamples,

    #[error("annotation references image {0:?} which has no feature map")]
    MissingImage(String),

    #[error("feature map {image_id:?} has {found} channels, expected {expected}")]
    InconsistentChannels {
        image_id: String,
        expected: usize,
        found: usize,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("model {model:?} is missing score {score}")]
    MissingScore { model: String, score: String },

    #[error("id mismatch: {0}")]
    IdMismatch(String),

    #[error("{0}")]
    InvalidArgument(String),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    /// The file or directory the error message already names, if any.
    pub fn path(&self) -> Option<&std::path::Path> {
        match self {
            Error::Io { path, .. }
            | Error::ManifestMissing { path }
            | Error::Manifest { path, .. }
            | Error::UnsupportedVersion { path, .. }
            | Error::TensorMissing { path }
            | Error::ShapeMismatch { path, .. }
            | Error::ChecksumMismatch { path, .. }
            | Error::Parse { path, .. } => Some(path),
            _ => None,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid labels: {0}")]
    InvalidLabels(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("column index {index} out of range for {cols} columns")]
    Index { index: usize, cols: usize },
    #[error("empty column selection")]
    EmptySelection,
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("grouped penalty requires a partition")]
    MissingPartition,
    #[error("IRLS state does not match the penalty groups: {0}")]
    StaleState(String),
    #[error("objective became non-finite at epoch {epoch}; lower the learning rate")]
    NonFiniteObjective { epoch: usize },
    #[error("training data holds a single class")]
    SingleClassData,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("line {line}: unknown {field} tag `{value}`")]
    UnknownTag {
        line: u64,
        field: &'static str,
        value: String,
    },
    #[error("line {line}: {message}")]
    RecordInvariant { line: u64, message: String },
    #[error("manifest has no records")]
    EmptyManifest,
    #[error("missing {field} tag on record `{id}`")]
    MissingTag { id: String, field: &'static str },

    #[error("bad magic bytes {found:?}, expected {expected:?}")]
    BadMagic { found: Vec<u8>, expected: &'static [u8; 4] },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("file truncated at byte offset {offset} (need {needed} bytes)")]
    TruncatedFile { offset: usize, needed: usize },
    #[error("dimensions overflow: {rows}x{cols}")]
    DimOverflow { rows: u64, cols: u64 },
    #[error("{count} trailing bytes after payload at offset {offset}")]
    TrailingBytes { offset: usize, count: usize },
    #[error("malformed header: {0}")]
    Header(String),

    #[error("cannot read image {path}: {message}")]
    UnreadableImage { path: PathBuf, message: String },
    #[error("image has zero area")]
    ZeroAreaImage,

    #[error("subject `{0}` has inconsistent ethnicity/gender tags")]
    InconsistentSubjectTags(String),
    #[error("ethnicity `{ethnicity}` has {found} subjects, need at least {needed}")]
    TooFewSubjects {
        ethnicity: String,
        found: usize,
        needed: usize,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable one-word category used for machine-parsable error lines.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Shape(_) => "ShapeError",
            Error::InvalidLabels(_) => "InvalidLabels",
            Error::EmptyBatch => "EmptyBatch",
            Error::Index { .. } => "IndexError",
            Error::EmptySelection => "IndexError",
            Error::InvalidDimension(_) => "InvalidDimension",
            Error::MissingPartition => "MissingPartition",
            Error::StaleState(_) => "StaleState",
            Error::NonFiniteObjective { .. } => "NonFiniteObjective",
            Error::SingleClassData => "SingleClassData",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::Parse { .. } => "ParseError",
            Error::DuplicateId(_) => "DuplicateId",
            Error::UnknownTag { .. } => "UnknownTag",
            Error::RecordInvariant { .. } => "RecordInvariant",
            Error::EmptyManifest => "EmptyManifest",
            Error::MissingTag { .. } => "MissingTag",
            Error::BadMagic { .. } => "BadMagic",
            Error::UnsupportedVersion(_) => "UnsupportedVersion",
            Error::TruncatedFile { .. } => "TruncatedFile",
            Error::DimOverflow { .. } => "DimOverflow",
            Error::TrailingBytes { .. } => "TrailingBytes",
            Error::Header(_) => "HeaderError",
            Error::UnreadableImage { .. } => "UnreadableImage",
            Error::ZeroAreaImage => "ZeroAreaImage",
            Error::InconsistentSubjectTags(_) => "InconsistentSubjectTags",
            Error::TooFewSubjects { .. } => "TooFewSubjects",
            Error::Io { .. } => "IoError",
            Error::Json(_) => "JsonError",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

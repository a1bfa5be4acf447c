use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed WAV file: {0}")]
    MalformedWav(String),

    #[error("unsupported WAV format: {0}")]
    UnsupportedFormat(String),

    #[error("invalid audio clip: {0}")]
    InvalidClip(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("unknown touch label {0:?}")]
    UnknownLabel(String),

    #[error("duplicate manifest path {0:?}")]
    DuplicatePath(String),

    #[error("unsupported manifest version {0}")]
    ManifestVersion(u32),

    #[error("invalid cutoff {cutoff_hz} Hz (must lie in (0, {nyquist_hz}) Hz)")]
    InvalidCutoff { cutoff_hz: f64, nyquist_hz: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("no frame exceeds the trim threshold")]
    EmptyAfterTrim,

    #[error("spectrogram is all zero")]
    DegenerateAllZero,

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("{0} split is empty")]
    EmptySplit(&'static str),

    #[error("class {label} has {count} sample(s); at least 2 are required")]
    ClassTooSmall { label: String, count: usize },

    #[error("model class count {model} does not match {expected}")]
    ClassCountMismatch { model: usize, expected: usize },

    #[error("bad model file magic {0:?}")]
    BadMagic([u8; 4]),

    #[error("unsupported model file version {0}")]
    VersionMismatch(u32),

    #[error("model file size mismatch: expected {expected} bytes, found {found}")]
    SizeMismatch { expected: u64, found: u64 },

    #[error("model contains non-finite weights")]
    NonFiniteWeights,

    #[error("CSV error: {0}")]
    Csv(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

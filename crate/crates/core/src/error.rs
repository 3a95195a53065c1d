use std::path::PathBuf;

use crate::imaging::Edge;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("distance undefined for an empty string")]
    EmptyString,

    #[error("image has zero pixels")]
    EmptyImage,

    #[error("pixel buffer holds {actual} pixels, expected {expected}")]
    PixelCount { expected: usize, actual: usize },

    #[error("failed to decode image ({len} bytes): {message}")]
    Decode { len: usize, message: String },

    #[error("failed to encode image: {0}")]
    Encode(String),

    #[error("rectangle {rect} exceeds the {edge} edge of a {width}x{height} image")]
    OutOfBounds {
        edge: Edge,
        rect: String,
        width: u32,
        height: u32,
    },

    #[error("window {window_w}x{window_h} does not fit inside a {width}x{height} image")]
    WindowTooLarge {
        window_w: u32,
        window_h: u32,
        width: u32,
        height: u32,
    },

    #[error("feature category `{0}` has no prototypes")]
    EmptyCategory(String),

    #[error("prototype set has no categories")]
    NoCategories,

    #[error("need at least {needed} prototypes, have {have}")]
    TooFewPrototypes { needed: usize, have: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("cut level {m} outside 1..={leaves}")]
    CutOutOfRange { m: usize, leaves: usize },

    #[error("missing labels for images: {}", .0.join(", "))]
    MissingLabels(Vec<String>),

    #[error("class `{class}` has {count} rows, fewer than the {folds} folds requested")]
    ClassTooSmall {
        class: String,
        count: usize,
        folds: usize,
    },

    #[error("unknown {kind} `{id}`")]
    UnknownId { kind: &'static str, id: String },

    #[error("{kind} `{id}` already exists")]
    Duplicate { kind: &'static str, id: String },

    #[error("invalid {field}: {message}")]
    Invalid { field: String, message: String },

    #[error("unsupported project format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("corrupt manifest {file} at `{path}`: {message}")]
    Manifest {
        file: PathBuf,
        path: String,
        message: String,
    },

    #[error("{kind} `{id}` references missing file {path}")]
    MissingFile {
        kind: &'static str,
        id: String,
        path: PathBuf,
    },

    #[error("cached complexity {cached} for `{id}` does not match recomputed {actual}")]
    StaleCache {
        id: String,
        cached: usize,
        actual: usize,
    },

    #[error("{0}")]
    Conflict(String),

    #[error("no project at {}", .0.display())]
    NotAProject(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Whether the error stems from bad input rather than a failed computation.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Io(_) | Error::Encode(_) | Error::StaleCache { .. } | Error::Json(_)
        )
    }

    pub(crate) fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

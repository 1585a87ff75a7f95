//! Error type shared by every module of the crate.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by tensor operations, layers, training, and file I/O.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Two tensors fed to a binary operation had incompatible shapes.
    #[error("{op}: shape mismatch, {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    /// A tensor did not have the shape an operation requires.
    #[error("{op}: expected shape {expected}, got {got:?}")]
    BadShape {
        op: &'static str,
        expected: String,
        got: Vec<usize>,
    },

    /// An axis argument was outside the tensor rank.
    #[error("axis {axis} out of range for rank-{rank} tensor")]
    AxisOutOfRange { axis: usize, rank: usize },

    /// Invalid model, schedule, or generator configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// A class label was outside `[0, num_classes)`.
    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },

    /// Batch normalization was asked to compute statistics over fewer
    /// than two rows.
    #[error("batch norm needs at least 2 rows in train mode, got {rows}")]
    BatchTooSmall { rows: usize },

    /// A video has fewer frames than the requested segment count.
    #[error("video has {frames} frames, fewer than {segments} segments")]
    VideoTooShort { frames: usize, segments: usize },

    /// An operation that needs at least one element received none.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// A binary file did not start with the expected magic bytes.
    #[error("bad magic in {path}: expected {expected:?}")]
    BadMagic { path: PathBuf, expected: &'static str },

    /// A binary file declared a format version this build cannot read.
    #[error("unsupported format version {found} in {path} (supported: {supported})")]
    UnsupportedVersion {
        path: PathBuf,
        found: u16,
        supported: u16,
    },

    /// A binary file ended before its header-declared payload.
    #[error("truncated file {path}: {detail}")]
    Truncated { path: PathBuf, detail: String },

    /// A feature payload contained NaN or infinite values.
    #[error("non-finite value at element {index} of {path}")]
    NonFinite { path: PathBuf, index: usize },

    /// A file decoded structurally but its contents are inconsistent.
    #[error("corrupt file {path}: {detail}")]
    Corrupt { path: PathBuf, detail: String },

    /// A manifest record failed validation.
    #[error("manifest {path}, line {line}: {detail}")]
    ManifestInvalid {
        path: PathBuf,
        line: usize,
        detail: String,
    },

    /// A checkpoint or dataset disagrees with the requested configuration.
    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),
}

use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the matching library.
#[derive(Debug, Error)]
pub enum Error {
    /// Underlying I/O failure, tagged with the path involved.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A file that exists but does not parse; `offset` is the byte where
    /// parsing gave up.
    #[error("{path}: malformed file at byte {offset}: {reason}")]
    Format {
        path: PathBuf,
        offset: u64,
        reason: String,
    },

    /// Two inputs that must share dimensions do not.
    #[error("dimension mismatch: {left_width}x{left_height} vs {right_width}x{right_height}")]
    DimensionMismatch {
        left_width: usize,
        left_height: usize,
        right_width: usize,
        right_height: usize,
    },

    /// A parameter outside its documented range.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;

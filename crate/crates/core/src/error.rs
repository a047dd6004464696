use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the numerical kernels, solvers and file I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("index {index} out of range (limit {limit}) in {context}")]
    IndexOutOfRange {
        context: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("numerical failure in {context} after {iterations} iterations: {detail}")]
    NumericalFailure {
        context: &'static str,
        iterations: usize,
        detail: String,
    },

    #[error("size guard exceeded in {context}: {size} > {limit}")]
    SizeGuard {
        context: &'static str,
        size: u128,
        limit: u128,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error in {path}: {kind}")]
    Format { path: PathBuf, kind: FormatError },
}

/// Distinct failure modes when decoding a tensor or CSV file.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormatError {
    #[error("bad magic bytes {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated file: needed {needed} bytes, found {found}")]
    Truncated { needed: usize, found: usize },
    #[error("dimension overflow: shape product does not fit in memory")]
    DimensionOverflow,
    #[error("trailing bytes after payload: {0}")]
    TrailingBytes(usize),
    #[error("malformed record at line {line}: {detail}")]
    Malformed { line: usize, detail: String },
}

impl FormatError {
    /// Stable numeric code for each failure kind.
    pub fn code(&self) -> u8 {
        match self {
            FormatError::BadMagic(_) => 1,
            FormatError::UnsupportedVersion(_) => 2,
            FormatError::Truncated { .. } => 3,
            FormatError::DimensionOverflow => 4,
            FormatError::TrailingBytes(_) => 5,
            FormatError::Malformed { .. } => 6,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn mismatch(context: &'static str, expected: impl ToString, found: impl ToString) -> Error {
    Error::DimensionMismatch {
        context,
        expected: expected.to_string(),
        found: found.to_string(),
    }
}

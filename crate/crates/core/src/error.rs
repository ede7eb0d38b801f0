use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    ShapeMismatch {
        op: &'static str,
        expected: String,
        got: String,
    },
    #[error("{op}: spatial dimension {dim} is too small (need at least {min})")]
    DimensionTooSmall {
        op: &'static str,
        dim: usize,
        min: usize,
    },
    #[error("{op}: spatial dimension {dim} is not divisible by {divisor}")]
    Indivisible {
        op: &'static str,
        dim: usize,
        divisor: usize,
    },
    #[error("empty mask at level {level}: no active pixels")]
    EmptyMask { level: usize },
    #[error("backward: output is not a scalar (shape {0})")]
    NotScalar(String),
    #[error("backward: tape is empty")]
    EmptyTape,
    #[error("non-finite value encountered in {0}")]
    NonFinite(String),
    #[error("style image has vanishing Gram matrices; style weight is undefined")]
    DegenerateStyle,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("matrix of dimension {n} exceeds the dense oracle limit {limit}")]
    TooLarge { n: usize, limit: usize },
    #[error("bad magic bytes in {0}")]
    BadMagic(String),
    #[error("truncated data in {0}")]
    Truncated(String),
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("malformed data: {0}")]
    Malformed(String),
    #[error("no usable images in {}", .0.display())]
    NoImages(PathBuf),
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        Error::ShapeMismatch {
            op,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by numeric blow-up rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonFinite(_))
    }

    /// True for file-system and file-format problems.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::BadMagic(_)
                | Error::Truncated(_)
                | Error::UnsupportedVersion(_)
                | Error::Malformed(_)
                | Error::NoImages(_)
        )
    }
}

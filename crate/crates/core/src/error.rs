use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the fusion and evaluation pipeline.
///
/// Variants fall into two families: computation-domain errors (bad shapes,
/// bad parameters) and I/O or parse errors tied to a file. The CLI maps the
/// first family to exit code 1 and the second to exit code 2.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: byte {offset}: {kind}")]
    Parse {
        path: PathBuf,
        offset: u64,
        kind: ParseErrorKind,
    },

    #[error("{path}: line {line}: {message}")]
    Csv {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}: referenced file does not exist")]
    MissingFile { path: PathBuf },
}

/// What went wrong while decoding a raster file.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseErrorKind {
    #[error("wrong magic number, expected {expected}")]
    WrongMagic { expected: &'static str },
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("big-endian PFM (positive scale) is not supported")]
    BigEndianUnsupported,
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("{0} unexpected trailing bytes after payload")]
    TrailingData(u64),
    #[error("invalid mask pixel value {value} (only 0 and 255 are allowed)")]
    InvalidPixel { value: u8 },
    #[error("sample {value} at pixel index {index} is outside [0, 1]")]
    SampleOutOfRange { index: usize, value: f32 },
}

impl Error {
    /// Whether this error belongs to the I/O or parse family.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Io { .. } | Error::Parse { .. } | Error::Csv { .. } | Error::MissingFile { .. }
        )
    }

    /// Process exit code for this error: 1 for domain errors, 2 for I/O and parse errors.
    pub fn exit_code(&self) -> i32 {
        if self.is_io() {
            2
        } else {
            1
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

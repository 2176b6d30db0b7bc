use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// Bit-flip noise with flip probability 1/2 erases all information.
    #[error("bit-flip noise with lambda = {0} is not invertible")]
    SingularNoise(f64),

    #[error(transparent)]
    Format(#[from] FormatError),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Failures reading or writing the binary container used for datasets and
/// checkpoints. Each variant has a stable numeric code.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic bytes: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 8], found: [u8; 8] },

    #[error("unsupported format version {found} (this build reads version {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    #[error("file truncated: needed {needed} more bytes at offset {offset}")]
    Truncated { offset: usize, needed: usize },

    #[error("checksum mismatch")]
    Checksum,

    #[error("malformed header: {0}")]
    Header(String),

    #[error("validation failed: {0}")]
    Validation(String),
}

impl FormatError {
    pub fn code(&self) -> u32 {
        match self {
            FormatError::BadMagic { .. } => 1,
            FormatError::UnsupportedVersion { .. } => 2,
            FormatError::Truncated { .. } => 3,
            FormatError::Checksum => 4,
            FormatError::Header(_) => 5,
            FormatError::Validation(_) => 6,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

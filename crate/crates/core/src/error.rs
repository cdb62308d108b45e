use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported array order: only C order is accepted")]
    UnsupportedOrder,

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid layout: {0}")]
    InvalidLayout(String),

    #[error("buffer too small: need {needed} bytes, have {available}")]
    BufferTooSmall { needed: usize, available: usize },

    #[error("overlapping layout cannot be unpacked")]
    OverlappingLayout,

    #[error("empty profile: {0}")]
    EmptyProfile(String),

    #[error("profile line {line}: {msg}")]
    ProfileFormat { line: usize, msg: String },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

use thiserror::Error;

/// Errors raised across the library.
///
/// The CLI maps these onto process exit codes, see [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("outside model domain: {0}")]
    Domain(String),
    #[error("numeric fault: {0}")]
    Numeric(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("singular allocation: {0}")]
    Singular(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::Config(_) | Error::Format(_) | Error::Shape(_) => 2,
            Error::Domain(_) | Error::Numeric(_) | Error::Singular(_) => 3,
            Error::Io(_) => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{func}: argument out of domain ({detail})")]
    Domain { func: &'static str, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("serialization error: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(func: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            func,
            detail: detail.into(),
        }
    }

    /// True for failures of a numerical routine (as opposed to bad input).
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Numeric(_))
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

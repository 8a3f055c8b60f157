use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("non-finite value in {what} at {location}")]
    Numeric { what: String, location: String },

    #[error("linear solve failed: {reason} (condition estimate {condition:e})")]
    Solver { reason: String, condition: f64 },
}

impl Error {
    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn numeric(what: impl Into<String>, location: impl Into<String>) -> Self {
        Error::Numeric {
            what: what.into(),
            location: location.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

/// Errors raised by model construction, simulation and certificate checks.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Invalid configuration. `key` is the dotted path of the offending entry.
    #[error("configuration error at `{key}`: {message}")]
    Config { key: String, message: String },

    /// An argument fell outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A numerical validation (delay, weight function, hypothesis) failed.
    #[error("validation failed: {message}")]
    Validation { message: String, at: Option<f64> },

    /// The state left the divergence guard during integration.
    #[error("trajectory diverged at t = {time}")]
    Divergence { time: f64 },

    /// A certificate does not have the structure a check requires.
    #[error("certificate structure error: {0}")]
    CertificateStructure(String),

    /// Matrix or vector sizes do not agree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn validation(message: impl Into<String>, at: Option<f64>) -> Self {
        Error::Validation {
            message: message.into(),
            at,
        }
    }

    /// Prefix the key of a configuration error with a parent section.
    pub fn within(self, section: &str) -> Self {
        match self {
            Error::Config { key, message } => Error::Config {
                key: if key.is_empty() {
                    section.to_string()
                } else {
                    format!("{section}.{key}")
                },
                message,
            },
            other => other,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

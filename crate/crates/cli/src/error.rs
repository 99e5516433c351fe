use std::fmt;

use apa_core::ApaError;

/// Failure of a command, carrying its process exit code.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// A check ran and did not pass.
    Assertion(String),
    /// A computation produced or met non-finite or undefined values.
    Numeric(String),
    /// Bad flags or flag values.
    Usage(String),
    /// Unreadable or malformed input, or unwritable output.
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Assertion(_) => 1,
            CliError::Numeric(_) => 2,
            CliError::Usage(_) => 64,
            CliError::Data(_) => 65,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Assertion(m) => write!(f, "check failed: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ApaError> for CliError {
    fn from(e: ApaError) -> Self {
        match e {
            ApaError::Domain(_) | ApaError::Shape(_) | ApaError::Spec(_) => CliError::Data(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

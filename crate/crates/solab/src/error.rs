use std::fmt;

use solab_core::Error as CoreError;

/// Process exit statuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    Io = 1,
    Schema = 2,
    BudgetLimited = 3,
    GuardTripped = 4,
    NotCertified = 5,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error("config error at `{path}`: {message}")]
    Schema { path: String, message: String },

    #[error("guard tripped: {0}")]
    Guard(String),

    #[error(transparent)]
    Core(CoreError),

    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn schema(path: impl fmt::Display, message: impl fmt::Display) -> Self {
        CliError::Schema { path: path.to_string(), message: message.to_string() }
    }

    pub fn io(path: impl fmt::Display, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_string(), source }
    }

    pub fn status(&self) -> ExitStatus {
        match self {
            CliError::Io { .. } | CliError::Other(_) => ExitStatus::Io,
            CliError::Schema { .. } => ExitStatus::Schema,
            CliError::Guard(_) | CliError::Core(CoreError::BoundaryMass { .. }) => ExitStatus::GuardTripped,
            CliError::Core(CoreError::InvalidModel(_) | CoreError::Dimension(_) | CoreError::InvalidArgument(_)) => {
                ExitStatus::Schema
            }
            CliError::Core(_) => ExitStatus::Io,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::Core(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;

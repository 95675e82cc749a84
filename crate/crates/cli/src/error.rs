use thiserror::Error;

/// Failures of a CLI command, grouped by the exit code they map to.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CliError {
    /// Bad flags, bad configuration, missing arguments.
    #[error("usage error: {0}")]
    Usage(String),
    /// Unreadable, malformed or inconsistent input files.
    #[error("data error: {0}")]
    Data(String),
    /// Training or evaluation produced non-finite values.
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<hbdl::Error> for CliError {
    fn from(err: hbdl::Error) -> Self {
        use hbdl::Error as E;
        match err {
            E::Numeric(_) | E::NumericOverflow { .. } | E::Domain { .. } | E::UndefinedMetric(_) => {
                CliError::Numeric(err.to_string())
            }
            E::Parse { .. } | E::Io(_) | E::ShapeMismatch { .. } | E::InvalidArgument(_) => {
                CliError::Data(err.to_string())
            }
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Data(err.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

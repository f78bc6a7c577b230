use std::fmt;

use nlstat_service::ServiceError;

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration file or value.
    Config(String),
    /// Malformed input file; exit code 2.
    Usage(String),
    Io(String),
    Service(ServiceError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Usage(msg) => write!(f, "usage error: {msg}"),
            CliError::Io(msg) => write!(f, "{msg}"),
            CliError::Service(e) => write!(f, "{}: {e}", e.class()),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ServiceError> for CliError {
    fn from(e: ServiceError) -> Self {
        CliError::Service(e)
    }
}

impl From<nlstat_core::Error> for CliError {
    fn from(e: nlstat_core::Error) -> Self {
        CliError::Service(ServiceError::Engine(e))
    }
}

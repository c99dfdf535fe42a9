use spc_core::SpcError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("{0}")]
    Io(String),
    #[error("verification failed: {0} check(s) did not pass")]
    VerifyFailed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::VerifyFailed(_) | CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<SpcError> for CliError {
    fn from(e: SpcError) -> Self {
        if e.is_numeric_failure() {
            CliError::Numeric(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Malformed input, domain violations, I/O failures: exit 1.
    #[error("{0}")]
    Input(String),
    /// Numerical non-convergence: exit 2.
    #[error("{0}")]
    NonConvergence(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::NonConvergence(_) => 2,
        }
    }
}

impl From<hierspline::Error> for CliError {
    fn from(e: hierspline::Error) -> Self {
        match e {
            hierspline::Error::NonConvergence(msg) => CliError::NonConvergence(msg),
            other => CliError::Input(other.to_string()),
        }
    }
}

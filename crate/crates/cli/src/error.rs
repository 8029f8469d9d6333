use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Malformed or infeasible configuration; nothing was run.
    #[error("config error: {0}")]
    Config(String),
    /// A command ran but its checks did not hold.
    #[error("check failed: {0}")]
    Failure(String),
    #[error(transparent)]
    Core(#[from] specedge::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("output error: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Failure(_) => 2,
            // core errors at run time are input errors in practice
            CliError::Core(_) => 1,
            CliError::Io(_) | CliError::Output(_) => 1,
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

use std::fmt;
use std::path::Path;

/// A command failure and the exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, configuration or input files (exit 2).
    Usage(String),
    /// A computation or experiment failed (exit 1).
    Failure(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failure(_) => 1,
        }
    }

    pub fn usage(msg: impl fmt::Display) -> Self {
        CliError::Usage(msg.to_string())
    }

    pub fn failure(msg: impl fmt::Display) -> Self {
        CliError::Failure(msg.to_string())
    }

    /// Reading a user-supplied input failed; this is the caller's problem.
    pub fn input(path: &Path, e: impl fmt::Display) -> Self {
        CliError::Usage(format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Failure(m) => f.write_str(m),
        }
    }
}

impl From<eigenmat::Error> for CliError {
    fn from(e: eigenmat::Error) -> Self {
        if e.is_usage() {
            CliError::Usage(e.to_string())
        } else {
            CliError::Failure(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Failure(format!("i/o error: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Failure(format!("json: {e}"))
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

use std::fmt;
use std::path::Path;

use pathsynth::ErrorKind;

/// Failure classes, each with its own exit code.
#[derive(Debug)]
pub enum CliError {
    Io(String),
    Validation(String),
    Numerical(String),
}

impl CliError {
    pub fn io(path: &Path, err: impl fmt::Display) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Io(m) => write!(f, "I/O error: {m}"),
            CliError::Validation(m) => write!(f, "invalid input: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<pathsynth::Error> for CliError {
    fn from(err: pathsynth::Error) -> Self {
        match err.kind() {
            ErrorKind::Validation => CliError::Validation(err.to_string()),
            ErrorKind::Numerical => CliError::Numerical(err.to_string()),
        }
    }
}

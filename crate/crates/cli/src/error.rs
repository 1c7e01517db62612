use std::fmt;
use std::io;
use std::path::Path;

use neurohand_core::Error;

/// Command failure, mapped to a distinct exit code per kind.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Invalid(String),
}

impl CliError {
    pub fn io(path: &Path, e: io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Invalid(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Invalid(m) => write!(f, "invalid input: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(e) => CliError::Io(e.to_string()),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

/// Attaches the path to core errors raised while touching `path`.
pub trait AtPath<T> {
    fn at(self, path: &Path) -> Result<T, CliError>;
}

impl<T> AtPath<T> for Result<T, Error> {
    fn at(self, path: &Path) -> Result<T, CliError> {
        self.map_err(|e| match e {
            Error::Io(e) => CliError::io(path, e),
            other => CliError::Invalid(format!("{}: {other}", path.display())),
        })
    }
}

impl<T> AtPath<T> for io::Result<T> {
    fn at(self, path: &Path) -> Result<T, CliError> {
        self.map_err(|e| CliError::io(path, e))
    }
}

use std::fmt;
use std::io;
use std::path::Path;

/// Exit codes: 2 usage or format, 3 filesystem, 4 numerical failure.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Core(hdgmm::Error),
}

impl CliError {
    pub fn io(path: &Path, err: io::Error) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }

    /// Attaches `path` to filesystem errors coming out of the library.
    pub fn at(path: &Path) -> impl FnOnce(hdgmm::Error) -> Self + '_ {
        move |e| match e {
            hdgmm::Error::Io(io) => CliError::io(path, io),
            hdgmm::Error::Format(msg) => CliError::Core(hdgmm::Error::Format(format!("{}: {msg}", path.display()))),
            other => CliError::Core(other),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Core(hdgmm::Error::Io(_)) => 3,
            CliError::Core(e) if e.is_numerical() => 4,
            CliError::Core(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage error: {msg}"),
            CliError::Io(msg) => write!(f, "io error: {msg}"),
            CliError::Core(e) if e.is_numerical() => write!(f, "numerical failure: {e}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<hdgmm::Error> for CliError {
    fn from(e: hdgmm::Error) -> Self {
        CliError::Core(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;

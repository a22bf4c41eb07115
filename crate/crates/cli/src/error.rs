use std::fmt;
use std::path::PathBuf;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Invalid(String),
    Io { path: PathBuf, source: std::io::Error },
    Lib(flameguide::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Invalid(_) => 3,
            CliError::Io { .. } => 4,
            CliError::Lib(flameguide::Error::Io { .. }) => 4,
            CliError::Lib(_) => 3,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) | CliError::Invalid(msg) => f.write_str(msg),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::Lib(err) => write!(f, "{err}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<flameguide::Error> for CliError {
    fn from(err: flameguide::Error) -> Self {
        CliError::Lib(err)
    }
}

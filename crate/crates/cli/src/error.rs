use std::fmt;
use std::path::PathBuf;

/// CLI-side errors: file formats, configuration, checkpoints, and anything
/// bubbling up from the core.
#[derive(Debug)]
pub enum CliError {
    /// Malformed file content; `offset` is the byte position of the problem.
    Parse {
        path: PathBuf,
        offset: u64,
        detail: String,
    },
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    Config(String),
    Checkpoint(String),
    Core(mirrordepth_core::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Parse {
                path,
                offset,
                detail,
            } => write!(f, "{}: parse error at byte {offset}: {detail}", path.display()),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Checkpoint(msg) => write!(f, "checkpoint error: {msg}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<mirrordepth_core::Error> for CliError {
    fn from(e: mirrordepth_core::Error) -> Self {
        CliError::Core(e)
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

pub fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
    let path = path.into();
    move |source| CliError::Io { path, source }
}

pub fn parse_err(path: impl Into<PathBuf>, offset: u64, detail: impl Into<String>) -> CliError {
    CliError::Parse {
        path: path.into(),
        offset,
        detail: detail.into(),
    }
}

use std::fmt;
use std::path::Path;
use std::process::ExitCode;

#[derive(Debug)]
pub enum CliError {
    Config { key: String, msg: String },
    Io(String),
    NotConverged(String),
    Verification(Vec<String>),
}

impl CliError {
    pub fn io(path: &Path, e: impl fmt::Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Config { .. } | CliError::Io(_) => 1,
            CliError::NotConverged(_) => 2,
            CliError::Verification(_) => 3,
        })
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config { key, msg } => write!(f, "config error at `{key}`: {msg}"),
            CliError::Io(msg) => write!(f, "i/o error: {msg}"),
            CliError::NotConverged(msg) => write!(f, "not converged: {msg}"),
            CliError::Verification(failed) => write!(f, "verification failed: {}", failed.join(", ")),
        }
    }
}

use std::fmt;
use std::path::{Path, PathBuf};

/// Every failure a command can report. `Display` is a single
/// `key=value` line suitable for log scraping.
#[derive(Debug)]
pub enum CliError {
    Config { field: String, message: String },
    UpstreamMissing { stage: &'static str, path: PathBuf },
    Numerical { stage: &'static str, message: String },
    Io { path: PathBuf, message: String },
    Input { path: PathBuf, message: String },
}

impl CliError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config { field: field.into(), message: message.into() }
    }

    pub fn numerical(stage: &'static str, e: impl fmt::Display) -> Self {
        CliError::Numerical { stage, message: e.to_string() }
    }

    pub fn io(path: &Path, e: impl fmt::Display) -> Self {
        CliError::Io { path: path.to_path_buf(), message: e.to_string() }
    }

    pub fn input(path: &Path, e: impl fmt::Display) -> Self {
        CliError::Input { path: path.to_path_buf(), message: e.to_string() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::UpstreamMissing { .. } => 3,
            CliError::Numerical { .. } => 4,
            CliError::Io { .. } | CliError::Input { .. } => 1,
        }
    }

    pub fn field(&self) -> Option<&str> {
        match self {
            CliError::Config { field, .. } => Some(field),
            _ => None,
        }
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").replace('"', "'")
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config { field, message } => {
                write!(f, "error=config_error field={field} message=\"{}\"", one_line(message))
            }
            CliError::UpstreamMissing { stage, path } => {
                write!(f, "error=upstream_missing stage={stage} path=\"{}\"", one_line(&path.display().to_string()))
            }
            CliError::Numerical { stage, message } => {
                write!(f, "error=numerical_failure stage={stage} message=\"{}\"", one_line(message))
            }
            CliError::Io { path, message } => write!(
                f,
                "error=io_error path=\"{}\" message=\"{}\"",
                one_line(&path.display().to_string()),
                one_line(message)
            ),
            CliError::Input { path, message } => write!(
                f,
                "error=input_error path=\"{}\" message=\"{}\"",
                one_line(&path.display().to_string()),
                one_line(message)
            ),
        }
    }
}

impl std::error::Error for CliError {}

use std::fmt;
use std::process::ExitCode;

/// Failure of a subcommand, carrying its documented exit code.
#[derive(Debug)]
pub enum CliError {
    /// I/O or parse failure (exit 1).
    Input(String),
    /// Invalid configuration or violated contract (exit 2).
    Config(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Input(_) => ExitCode::from(1),
            CliError::Config(_) => ExitCode::from(2),
        }
    }

    pub fn io(what: impl fmt::Display, err: impl fmt::Display) -> Self {
        CliError::Input(format!("{what}: {err}"))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) | CliError::Config(m) => f.write_str(m),
        }
    }
}

impl From<supclust::Error> for CliError {
    fn from(e: supclust::Error) -> Self {
        if e.is_input_error() {
            CliError::Input(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Malformed config or data text.
    #[error("parse error: {0}")]
    Parse(String),
    /// Missing or unreadable input.
    #[error("input error: {0}")]
    Input(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] bcev::Error),
    #[error("output error: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Parse(_) | Self::Input(_) => 2,
            Self::Config(_) | Self::Core(_) => 3,
            Self::Output(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Output(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::Output(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

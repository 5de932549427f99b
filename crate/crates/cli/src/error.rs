use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, settings or arguments. Exit code 1.
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] viper_core::Error),

    /// Anything else that went wrong while running. Exit code 2.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Core(viper_core::Error::Config(_)) => 1,
            _ => 2,
        }
    }

    pub fn io(what: impl std::fmt::Display, e: std::io::Error) -> Self {
        CliError::Runtime(format!("{what}: {e}"))
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

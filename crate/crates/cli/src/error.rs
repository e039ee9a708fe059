use retouch_core::Error;

/// Process outcome of a failed command.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags or unusable inputs; exit code 1.
    #[error("{0}")]
    Usage(String),
    /// A backend or model failed; exit code 2.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        Self::Usage(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    /// Errors while reading user-supplied inputs count as usage errors.
    pub fn input(what: &str, e: impl std::fmt::Display) -> Self {
        Self::Usage(format!("{what}: {e}"))
    }

    /// Errors while reading model files count as model failures.
    pub fn model(what: &str, e: impl std::fmt::Display) -> Self {
        Self::Runtime(format!("{what}: {e}"))
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Parameter(_) => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

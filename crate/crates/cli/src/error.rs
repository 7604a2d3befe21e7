use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("model violation: {0}")]
    Violation(String),

    #[error("comparison error: {0}")]
    Compare(String),

    #[error("malformed run log: {0}")]
    Log(String),

    #[error(transparent)]
    Core(passm::Error),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 for anything the user must fix in the config, 3 for a hard
    /// model-violation flag, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Violation(_) => 3,
            _ => 1,
        }
    }

    pub fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
        let context = context.into();
        move |source| CliError::Io { context, source }
    }
}

impl From<passm::Error> for CliError {
    fn from(e: passm::Error) -> Self {
        match e {
            passm::Error::Config(_) | passm::Error::Schedule(_) => CliError::Config(e.to_string()),
            passm::Error::ModelViolation(m) => CliError::Violation(m),
            other => CliError::Core(other),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

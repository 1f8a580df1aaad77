use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] genlearn::Error),
    #[error("{0}")]
    Io(String),
    #[error("replay mismatch: {0}")]
    Mismatch(String),
}

impl CliError {
    /// 0 success, 1 numeric failure or mismatch, 2 usage or bad input.
    pub fn exit_code(&self) -> i32 {
        use genlearn::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(
                E::InvalidArgument(_)
                | E::InvalidSpec(_)
                | E::InvalidModel(_)
                | E::NonDifferentiableActivation(_)
                | E::ContextTooLarge { .. }
                | E::Serialization(_),
            ) => 2,
            CliError::Core(_) | CliError::Io(_) | CliError::Mismatch(_) => 1,
        }
    }
}

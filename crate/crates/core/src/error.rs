use thiserror::Error;

/// Failure modes shared by every module in the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid divergence spec: {0}")]
    InvalidSpec(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("singular design matrix (condition estimate {condition:.3e})")]
    SingularDesign { condition: f64 },
    #[error("step size too large: iterates diverged at step {step}")]
    StepSizeTooLarge { step: usize },
    #[error("activation `{0}` has no derivative")]
    NonDifferentiableActivation(String),
    #[error("context order {order} exceeds the supported maximum {max}")]
    ContextTooLarge { order: usize, max: usize },
    #[error("degenerate spectrum: retained eigenvalue {eigenvalue:.3e} below noise variance {noise:.3e}")]
    DegenerateSpectrum { eigenvalue: f64, noise: f64 },
    #[error("mixture component {component} collapsed")]
    ComponentCollapse { component: usize },
    #[error("invalid noise schedule: {0}")]
    InvalidSchedule(String),
    #[error("quadrature did not converge: refinements differ by {difference:.3e}")]
    AccuracyFailure { difference: f64 },
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("serialization: {0}")]
    Serialization(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

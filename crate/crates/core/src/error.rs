use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("admissibility violated: {0}")]
    Admissibility(String),

    #[error("step-size failure: {0}")]
    StepSize(String),

    #[error("eigen-solve failed: {0}")]
    Eigen(String),

    #[error("stability restriction violated: {0}")]
    Stability(String),

    #[error("blow-up detected: {0}")]
    BlowUp(String),

    #[error("negative density: {0}")]
    Negativity(String),

    #[error("no crossing: {0}")]
    NoCrossing(String),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::StepSize(_)
                | Error::Eigen(_)
                | Error::Stability(_)
                | Error::BlowUp(_)
                | Error::Negativity(_)
                | Error::NoCrossing(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}

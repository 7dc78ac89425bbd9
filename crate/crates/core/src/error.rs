use thiserror::Error;

use crate::trajectory::Trajectory;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("kernel {0} has no power-law tail class")]
    NoTailClass(String),

    #[error("triple is not in the admissible cone: {0}")]
    NotAdmissible(String),

    #[error("singular kernel: {0}")]
    SingularKernel(String),

    #[error("wrong scenario: {0}")]
    WrongScenario(String),

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("coordinate mismatch: trajectory is in {found}, region expects {expected}")]
    CoordinateMismatch { found: String, expected: String },

    #[error("fit error: {0}")]
    Fit(String),

    #[error("config error: {0}")]
    Config(String),

    /// The stepper gave up; the trajectory recorded so far is kept.
    #[error("integration failed at t = {t}: {reason}")]
    Integration {
        t: f64,
        reason: String,
        partial: Box<Trajectory>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn scenario(msg: impl Into<String>) -> Self {
        Error::WrongScenario(msg.into())
    }
}

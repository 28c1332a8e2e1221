use thiserror::Error;

/// Failure modes shared by every numerical stage.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LabError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("certification failure: {0}")]
    CertificationFailure(String),
    #[error("degenerate pairing: {0}")]
    DegeneratePairing(String),
    #[error("ill-conditioned eigenbasis (condition number {0:.3e})")]
    IllConditionedBasis(f64),
    #[error("ambiguous count: {0}")]
    AmbiguousCount(String),
    #[error("inconclusive: {0}")]
    Inconclusive(String),
    #[error("blow-up detected at t = {time:.6}")]
    BlowUp { time: f64 },
    #[error("bracket failure: {0}")]
    BracketFailure(String),
    #[error("singular matrix at pivot {0}")]
    Singular(usize),
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn invalid(msg: impl Into<String>) -> LabError {
    LabError::InvalidArgument(msg.into())
}

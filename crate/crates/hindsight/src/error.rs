//! Crate-wide error type.

/// Errors surfaced by any of the solver, policy, or harness modules.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("(A, B) is not stabilizable: {0}")]
    NotStabilizable(String),
    #[error("state cost is not positive semidefinite: {0}")]
    CostNotPsd(String),
    #[error("control cost is not positive definite: {0}")]
    CostNotPd(String),
    #[error("inner matrix R + B'PB is numerically singular")]
    SingularInnerMatrix,
    #[error("fixed-point iteration did not converge within {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("spectral radius {rho} too close to or above 1 for a discrete Lyapunov solve")]
    SpectralRadiusTooLarge { rho: f64 },
    #[error("stacked Hessian is not positive definite")]
    NotPositiveDefinite,
    #[error("horizon mismatch: policy built for {expected} steps, rollout has {actual}")]
    HorizonMismatch { expected: usize, actual: usize },
    #[error("policy produced a non-finite state or control at step {step}")]
    NonFiniteState { step: usize },
    #[error("no descent start terminated at a stable gain")]
    AllStartsDiverged,
    #[error("stacked problem too large: m*T = {size} exceeds cap {max}")]
    ProblemTooLarge { size: usize, max: usize },
    #[error("two routes to the same quantity disagree: {0}")]
    FormulaMismatch(String),
    #[error("invalid noise model: {0}")]
    InvalidNoiseModel(String),
    #[error("{path}: {reason}")]
    Parse { path: String, reason: String },
    #[error("trial {index}: {source}")]
    Trial {
        index: usize,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable short name, used by the CLI to report the originating failure.
    pub fn name(&self) -> &'static str {
        match self {
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::NotStabilizable(_) => "NotStabilizable",
            Error::CostNotPsd(_) => "CostNotPsd",
            Error::CostNotPd(_) => "CostNotPd",
            Error::SingularInnerMatrix => "SingularInnerMatrix",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::SpectralRadiusTooLarge { .. } => "SpectralRadiusTooLarge",
            Error::NotPositiveDefinite => "NotPositiveDefinite",
            Error::HorizonMismatch { .. } => "HorizonMismatch",
            Error::NonFiniteState { .. } => "NonFiniteState",
            Error::AllStartsDiverged => "AllStartsDiverged",
            Error::ProblemTooLarge { .. } => "ProblemTooLarge",
            Error::FormulaMismatch(_) => "FormulaMismatch",
            Error::InvalidNoiseModel(_) => "InvalidNoiseModel",
            Error::Parse { .. } => "Parse",
            Error::Trial { source, .. } => source.name(),
            Error::Io(_) => "Io",
        }
    }

    /// True for failures of input/model invariants (CLI exit status 2);
    /// everything else is a numerical failure (exit status 3).
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::DimensionMismatch(_)
                | Error::NotStabilizable(_)
                | Error::CostNotPsd(_)
                | Error::CostNotPd(_)
                | Error::InvalidNoiseModel(_)
                | Error::Parse { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

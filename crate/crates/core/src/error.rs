use alloc::string::String;

/// Failure modes of kernel evaluation.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("rank {rank} exceeds the configured cap {cap}")]
    RankTooLarge { rank: usize, cap: usize },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("tolerance {target:e} unachievable (best error estimate {achieved:e})")]
    ToleranceUnachievable { target: f64, achieved: f64 },

    #[error("quadrature did not converge: estimated error {error:e} > tolerance {tol:e}")]
    QuadratureNonconvergence { error: f64, tol: f64 },

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    /// True for errors caused by the caller's input rather than by numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::RankTooLarge { .. }
                | Error::DegenerateInput(_)
                | Error::PreconditionViolated(_)
                | Error::InvalidInput(_)
        )
    }
}

pub type Result<T> = core::result::Result<T, Error>;

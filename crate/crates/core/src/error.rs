use thiserror::Error;

/// Errors raised by the constructions, simulators and checks in this crate.
///
/// Failed *assumptions* and failed *convergence checks* are not errors; they
/// are reported as values so callers can inspect margins and locations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("step {step} does not evenly divide {span}")]
    StepDivisibility { step: f64, span: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("matrix is numerically singular (rank {rank} < {dim})")]
    SingularMatrix { rank: usize, dim: usize },

    #[error("window exhausted: {0}")]
    WindowExhausted(String),

    #[error("spectral abscissa {0} is not negative")]
    SpectralAbscissa(f64),

    #[error("non-finite state encountered at {0}")]
    NonFinite(f64),

    #[error("power iteration did not converge after {0} iterations")]
    NoConvergence(usize),

    #[error("non-positive denominator {name} = {value}")]
    NonPositiveDenominator { name: &'static str, value: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

/// Errors produced by validation, cost guards, and simulation.
#[derive(Debug, Error)]
pub enum Error {
    /// Noise distribution violates a moment or shape invariant.
    #[error("invalid noise distribution: {0}")]
    NoiseValidation(String),

    /// An argument is outside its documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A time or index lies beyond the simulated horizon.
    #[error("out of range: {0}")]
    OutOfRange(String),

    /// An exact enumeration would exceed the configured cost guard.
    #[error("cost guard: {what} needs {needed} states, limit is {limit}")]
    CostGuard {
        what: &'static str,
        needed: u128,
        limit: u128,
    },

    /// The fine-grid horizon ran out before the requested number of
    /// barrier crossings was found.
    #[error("coupling under-run: requested {requested} crossings, achieved {achieved}")]
    CouplingUnderRun { requested: usize, achieved: usize },

    /// An operation requiring a predictable integrand got a
    /// non-predictable one.
    #[error("process is not flagged predictable")]
    NotPredictable,

    /// Two operands disagree on horizon length or noise parameter.
    #[error("operand mismatch: {0}")]
    Mismatch(String),

    /// Kernel fails a declared symmetry or diagonal constraint.
    #[error("kernel validation: {0}")]
    KernelValidation(String),

    /// The alternating series for the exit-time density failed to
    /// reach the requested truncation tolerance.
    #[error("series truncation did not converge (tol {tol})")]
    SeriesTruncation { tol: f64 },

    /// Regression input empty, too short, or nonpositive.
    #[error("regression input: {0}")]
    Regression(String),

    /// Unknown built-in functional label.
    #[error("unknown functional label: {0}")]
    UnknownFunctional(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

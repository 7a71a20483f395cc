use thiserror::Error;

/// Failures raised while constructing or analysing a map.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("branch is not strictly increasing near x = {x} (g' = {slope})")]
    NonMonotone { x: f64, slope: f64 },

    #[error("spurious fixed point or wrong orientation near x = {x}")]
    SpuriousFixedPoint { x: f64 },

    #[error("expansion certificate failed: min (g^n)' = {lambda}")]
    ExpansionFailure { lambda: f64 },

    #[error("explicit pieces do not fit together: {0}")]
    RangeMismatch(String),

    #[error("point {x} is outside the admissible domain")]
    DomainError { x: f64 },

    #[error("domain error: {0}")]
    ConstantDomain(String),

    #[error("root finder did not converge: {0}")]
    ConvergenceFailure(String),

    #[error("cell index ({m}, {n}) outside table depth {depth}")]
    IndexOutOfRange { m: usize, n: usize, depth: usize },

    #[error("not found: {0}")]
    NotFound(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("orbit of {x} did not return within {steps} steps")]
    BudgetExceeded { x: f64, steps: u64 },

    #[error("orbit of {x} hit a partition boundary")]
    BoundaryHit { x: f64 },

    #[error("truncation too small: escaped mass {escaped:.3e}")]
    TruncationTooSmall { escaped: f64 },

    #[error("power iteration stalled after {iterations} sweeps (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("observable: {0}")]
    Observable(String),
}

impl Error {
    /// True for errors caused by bad input rather than numerical trouble.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidParams(_)
                | Error::NonMonotone { .. }
                | Error::SpuriousFixedPoint { .. }
                | Error::ExpansionFailure { .. }
                | Error::RangeMismatch(_)
                | Error::DomainError { .. }
                | Error::ConstantDomain(_)
                | Error::IndexOutOfRange { .. }
                | Error::Observable(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

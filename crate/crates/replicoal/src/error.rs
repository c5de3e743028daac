use thiserror::Error;

/// Errors produced by model construction, simulation, and analysis.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid rate matrix: {0}")]
    InvalidRateMatrix(String),

    #[error("invalid payoff matrix: {0}")]
    InvalidPayoffMatrix(String),

    #[error("invalid block state: {0}")]
    InvalidState(String),

    #[error("invalid simplex point: {0}")]
    InvalidSimplex(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("infeasible merge channel: {0}")]
    InfeasibleChannel(String),

    #[error("payoff matrix is singular")]
    SingularMatrix,

    /// The replicator fixed point has a coordinate <= 0. Reported, never clamped.
    #[error("fixed point not interior: {0}")]
    BoundaryFixedPoint(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("state budget exceeded: {0}")]
    BudgetExceeded(String),

    /// Tau-leap could not find a feasible step after repeated halvings.
    #[error("tau-leap overshoot persisted after {halvings} halvings at sigma={sigma}")]
    LeapOvershoot { halvings: u32, sigma: u64 },

    #[error("operation requires a fully event-resolved trajectory")]
    NeedsFullTrajectory,

    #[error("coordinate underflow during integration: {0}")]
    CoordinateUnderflow(f64),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

/// Errors produced by the design library.
#[derive(Debug, Error)]
pub enum DesignError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unknown model preset `{0}`")]
    UnknownPreset(String),

    #[error("preset `{preset}` expects {expected} parameters, got {got}")]
    ParameterCount {
        preset: String,
        expected: usize,
        got: usize,
    },

    #[error("invalid model parameters: {0}")]
    InvalidParameters(String),

    #[error("degenerate response probability {pi} at design point {point:?}")]
    DegenerateProbability { pi: f64, point: Vec<f64> },

    #[error("information matrix is singular or ill-conditioned")]
    SingularInformation,

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("invalid design space: {0}")]
    InvalidSpace(String),

    #[error("invalid criterion: {0}")]
    InvalidCriterion(String),

    #[error("invalid solver options: {0}")]
    InvalidOptions(String),

    #[error("infeasible problem: {0}")]
    Infeasible(String),

    #[error("rounding precondition violated: {0}")]
    RoundingPrecondition(String),

    #[error("annealing failed: {0}")]
    AnnealFailed(String),
}

pub type Result<T, E = DesignError> = std::result::Result<T, E>;

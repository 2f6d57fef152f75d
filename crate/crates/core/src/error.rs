use thiserror::Error;

/// Errors raised by the simulation and inference routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("arm {arm} out of range for a {n_arms}-armed model")]
    ArmOutOfRange { arm: usize, n_arms: usize },

    #[error("contextual model requires a context")]
    MissingContext,

    #[error("context {context} out of range for {n_contexts} contexts")]
    ContextOutOfRange { context: usize, n_contexts: usize },

    #[error("round {got} does not follow round {previous}")]
    NonMonotoneRound { previous: u64, got: u64 },

    #[error("propensity {0} is outside (0, 1]")]
    InvalidPropensity(f64),

    #[error("propensity vector does not sum to one (sum = {0})")]
    PropensitySum(f64),

    #[error("arm {0} was never pulled")]
    ArmNeverPulled(usize),

    #[error("zero propensity for arm {arm} at round {round}; clip the design before using inverse weighting")]
    ZeroPropensity { arm: usize, round: u64 },

    #[error("design `{design}` is incompatible with model `{model}`")]
    Incompatible { design: String, model: String },

    #[error("all weights are zero")]
    ZeroWeights,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("input contains NaN")]
    NanInput,

    #[error("sample too small: need at least {needed}, got {got}")]
    SampleTooSmall { needed: usize, got: usize },

    #[error("degenerate sample: {0}")]
    Degenerate(&'static str),

    #[error("standard error unavailable")]
    StderrUnavailable,

    #[error("statistic mismatch: map calibrated for `{calibrated}`, got `{requested}`")]
    StatisticMismatch { calibrated: String, requested: String },

    #[error("empty confidence set")]
    EmptySet,

    #[error("unsupported: {0}")]
    Unsupported(&'static str),

    #[error("serialization: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

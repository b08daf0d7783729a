use crate::positivity::PositivityReport;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("design does not support enumeration: {0}")]
    UnsupportedDesign(String),

    #[error("dimension {dimension} exceeds the enumeration cap {cap}")]
    DimensionTooLarge { dimension: usize, cap: usize },

    #[error("no exact moment route: {0}")]
    NoExactRoute(String),

    #[error("exact moments required but the provider is Monte Carlo")]
    InexactMoments,

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("functional is not differentiable on this basis: {0}")]
    NonDifferentiable(String),

    #[error("coordinate dependence structure of the design is unknown")]
    DependenceUnknown,

    #[error("positivity violated ({} witnesses)", .0.witnesses.len())]
    PositivityViolated(Box<PositivityReport>),

    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),

    #[error("1/p + 1/q must equal 1/2, got p = {p}, q = {q}")]
    InvalidConjugatePair { p: f64, q: f64 },

    #[error("invalid model space: {0}")]
    InvalidSpace(String),

    #[error("variance machinery was not built for this pipeline")]
    VarianceUnavailable,
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid box: {field} = {value} ({reason})")]
    InvalidBox {
        field: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("sigma[{index}] = {value} must be strictly positive")]
    NonPositiveSigma { index: usize, value: f64 },

    #[error("sigma[{index}]^2 = {value} exceeds 1")]
    SigmaOutOfRange { index: usize, value: f64 },

    #[error("invalid covariance: {0}")]
    InvalidCovariance(String),

    #[error("invalid probe direction: {0}")]
    InvalidDirection(String),

    #[error("invalid probe scales: {0}")]
    InvalidScales(String),

    #[error("perturbed covariance at scale {scale} has negative diagonal entry {index}")]
    InvalidPerturbation { scale: f64, index: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("prediction mean component {index} is {mean}, box component is {component}")]
    MeanMismatch {
        index: usize,
        mean: f64,
        component: f64,
    },

    #[error("invalid loss configuration: {0}")]
    InvalidLossConfig(String),

    #[error("k = {0} divisions is too small (need at least 5)")]
    KTooSmall(usize),

    #[error("objective is not finite at coordinate {coordinate}")]
    NonFiniteObjective { coordinate: usize },

    #[error("optimization diverged at step {step}")]
    Diverged { step: usize },

    #[error("variable `{0}` is constant, rank correlation undefined")]
    DegenerateRanks(&'static str),

    #[error("need at least {needed} detections, got {found}")]
    TooFewDetections { needed: usize, found: usize },

    #[error("no counterexample found after {trials} trials")]
    NoneFound { trials: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

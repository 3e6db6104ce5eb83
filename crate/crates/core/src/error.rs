use thiserror::Error;

/// Rejection reasons for raw economic primitives.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("gamma must lie in (0, 1), got {gamma}")]
    GammaOutOfRange { gamma: f64 },
    #[error("sigma_d must be positive, got {sigma_d}")]
    NonpositiveSigma { sigma_d: f64 },
    #[error("delta = 2(beta2 - beta1)/sigma_d^2 = {delta} must lie in (-gamma, 0) = ({lower}, 0)")]
    DeltaOutOfRange { delta: f64, lower: f64 },
    #[error("A = {a_cap} must exceed 1 + delta - 2 delta/gamma = {threshold}")]
    ACapTooSmall { a_cap: f64, threshold: f64 },
    #[error("{name} must be positive, got {value}")]
    Nonpositive { name: &'static str, value: f64 },
    #[error("{name} is not finite")]
    NonFinite { name: &'static str },
    #[error("equal time preferences required, got beta1 = {beta1}, beta2 = {beta2}")]
    UnequalPreferences { beta1: f64, beta2: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error("evaluation point {y} outside the open interval (0, 1)")]
    Domain { y: f64 },
    #[error("step size underflow at y = {y}")]
    StepSizeUnderflow { y: f64 },
    #[error("no supercritical shooting parameter found below {ceiling}")]
    BracketFailure { ceiling: f64 },
    #[error("indeterminate shooting region around xi = {xi} exceeds tolerance")]
    ToleranceFailure { xi: f64 },
    #[error("h(y_end) = {h_end} is within the classification margin of 1 at xi = {xi}")]
    Indeterminate { xi: f64, h_end: f64 },
    #[error("theta2 = {theta2} outside the solvable range (0, {upper})")]
    ThetaOutOfRange { theta2: f64, upper: f64 },
    #[error("fitted tail exponent {exponent} is within the guard band of 1")]
    InconclusiveTail { exponent: f64 },
    #[error("stationary density is not normalizable: {reason}")]
    NotNormalizable { reason: String },
    #[error("bin layouts differ: {left} vs {right} bins")]
    BinMismatch { left: usize, right: usize },
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;

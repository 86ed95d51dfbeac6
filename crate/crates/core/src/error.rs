use thiserror::Error;

/// Errors produced by model construction, inference and post-processing.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("unsupported kernel smoothness nu = {0}; only nu = 1/2 is available")]
    UnsupportedKernel(f64),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("continuous model is not Hurwitz (max eigenvalue real part {max_real:.3e})")]
    UnstableModel { max_real: f64 },

    #[error("process noise covariance is not positive semi-definite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPositiveSemiDefinite { min_eigenvalue: f64 },

    #[error("singular matrix in {0}")]
    Singular(&'static str),

    #[error("non-finite innovation covariance")]
    NonFiniteInnovation,

    #[error("inference failed at time step {step}: {reason}")]
    InferenceFailure { step: usize, reason: String },

    #[error("mixture has zero total weight")]
    ZeroWeight,

    #[error("optimization failed: {0}")]
    OptimizationFailure(String),

    #[error("ODE solver step size underflow at t = {t:.9} s")]
    StepSizeUnderflow { t: f64 },

    #[error("no stick-to-slip transitions detected; static friction cannot be estimated")]
    NoStops,

    #[error("rank-deficient design matrix in least-squares fit")]
    RankDeficient,

    #[error("parameter correction is singular: A3 = {0} is too close to 1")]
    SingularCorrection(f64),

    #[error("constant truth series has zero variance")]
    ConstantTruth,

    #[error("csv: {0}")]
    Csv(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

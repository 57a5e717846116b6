use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("invalid Bloch vector: |b| = {norm} exceeds 1 + {tolerance}")]
    BlochNorm { norm: f64, tolerance: f64 },

    #[error("invalid tolerance {0}: must lie in (0, 1e-2]")]
    InvalidTolerance(f64),

    #[error("step size underflow at tau = {tau} (h = {step:e})")]
    StepSizeUnderflow { tau: f64, step: f64 },

    #[error("integration drifted off the Bloch ball at tau = {tau}: |b| = {norm}")]
    NormDrift { tau: f64, norm: f64 },

    #[error("no classification before max_tau = {max_tau}")]
    MaxTauExceeded { max_tau: f64 },

    #[error("angle phi = {phi} is outside the mixed-state branch [-pi, 0]")]
    OutOfBranch { phi: f64 },

    #[error("angular rate is singular at |b| = 0; use the Cartesian equation")]
    SingularPolar,

    #[error("signal is not periodic over the supplied period (end mismatch {mismatch:e})")]
    NonPeriodic { mismatch: f64 },

    #[error("quadrature did not reach tolerance (error estimate {error_estimate:e})")]
    QuadratureNotConverged { error_estimate: f64 },

    #[error("spectrum has no coefficient of order {0}")]
    MissingCoefficient(usize),

    #[error("unphysical observables: {0}")]
    Unphysical(String),

    #[error("rank-deficient design matrix (condition estimate {condition:e})")]
    RankDeficient { condition: f64 },

    #[error("dataset error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Dataset { line: Option<u64>, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, value: f64, reason: &'static str) -> Self {
        Error::InvalidParameter {
            name,
            value,
            reason,
        }
    }

    pub(crate) fn dataset(line: Option<u64>, message: impl Into<String>) -> Self {
        Error::Dataset {
            line,
            message: message.into(),
        }
    }

    /// True for failures caused by bad input data rather than numerics.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Dataset { .. } | Error::Io(_) | Error::Csv(_) | Error::Json(_)
        )
    }

    /// True for failures of a numerical procedure on otherwise valid input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::StepSizeUnderflow { .. }
                | Error::NormDrift { .. }
                | Error::MaxTauExceeded { .. }
                | Error::NonPeriodic { .. }
                | Error::QuadratureNotConverged { .. }
                | Error::RankDeficient { .. }
                | Error::SingularPolar
        )
    }
}

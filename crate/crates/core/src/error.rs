use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid subsystem dimension {0}: every subsystem needs at least two levels")]
    InvalidDimension(usize),

    #[error("subsystem index {index} out of range for a space with {count} subsystems")]
    SubsystemOutOfRange { index: usize, count: usize },

    #[error("level {label} out of range for subsystem {subsystem} of dimension {dim}")]
    LabelOutOfRange { subsystem: usize, label: usize, dim: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("state is not normalized (norm {0})")]
    NotNormalized(f64),

    #[error("matrix is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),

    #[error("density matrix trace is {0}, expected 1")]
    BadTrace(f64),

    #[error("matrix is not positive semidefinite (minimum eigenvalue {0:e})")]
    NotPositive(f64),

    #[error("formula is singular: {0}")]
    Singular(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("step size underflow at t = {t:e} s (h = {step:e} s)")]
    StepSizeUnderflow { t: f64, step: f64 },

    #[error("norm drift {drift:e} at t = {t:e} s exceeds the abort threshold")]
    NormDrift { t: f64, drift: f64 },

    #[error("positivity violated at t = {t:e} s (minimum eigenvalue {min_eigenvalue:e})")]
    PositivityViolation { t: f64, min_eigenvalue: f64 },

    #[error("fit did not converge: {0}")]
    FitFailed(String),

    #[error("required drive amplitude {required:e} rad/s exceeds the ceiling {ceiling:e} rad/s")]
    AmplitudeCeiling { required: f64, ceiling: f64 },

    #[error("tomography records do not cover setting {0}")]
    IncompleteTomography(String),

    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

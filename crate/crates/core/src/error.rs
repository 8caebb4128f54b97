use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("unknown factor `{0}`")]
    UnknownFactor(String),

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("imaginary squeezed-mode frequency: drive {omega} must stay below detuning {delta_c}")]
    ImaginaryFrequency { omega: f64, delta_c: f64 },

    #[error("unstable squeezing: G+ = {g_plus} must stay below G- = {g_minus}")]
    UnstableSqueezing { g_plus: f64, g_minus: f64 },

    #[error("squeezing undefined: mean spin length {length:e} below threshold {threshold:e}")]
    UndefinedSqueezing { length: f64, threshold: f64 },

    #[error("integration failed at t = {t}: {reason}")]
    IntegrationFailure {
        t: f64,
        reason: String,
        trace_drift: f64,
        hermiticity_drift: f64,
    },

    #[error("steady state is not unique (smallest singular value {sigma_min:e})")]
    AmbiguousSteadyState { sigma_min: f64 },

    #[error("steady-state solver failed: {0}")]
    Solver(String),

    #[error("no convergence after {periods} periods (last change {change:e})")]
    NoConvergence { periods: usize, change: f64 },

    #[error("zero coupling: sin(f0) vanishes")]
    ZeroCoupling,

    #[error("unknown preset `{name}`; available presets: {available}")]
    UnknownPreset { name: String, available: String },

    #[error("preset data: {0}")]
    PresetFormat(String),
}

use thiserror::Error;

/// Errors raised anywhere in the library.
///
/// The CLI maps [`Error::is_numerical`] failures to a distinct exit code, so
/// keep that classification in sync when adding variants.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("preset `{preset}` requires parameter `{param}`")]
    MissingParameter { preset: String, param: String },

    #[error("derivative self-check failed for `{field}` at {at}: analytic {analytic}, finite difference {numeric}")]
    DerivativeMismatch {
        field: String,
        at: String,
        analytic: f64,
        numeric: f64,
    },

    #[error("growth check failed: {0}")]
    GrowthViolation(String),

    #[error("CFL violation: dt = {dt} exceeds the stable bound {bound}")]
    Cfl { dt: f64, bound: f64 },

    #[error("non-finite value at time level {level} (t = {t}), node {node} (x = {x})")]
    NonFinite {
        level: usize,
        t: f64,
        node: usize,
        x: f64,
    },

    #[error("non-finite state on path {path} at step {step}")]
    NonFiniteState { path: usize, step: usize },

    #[error("x = {x} outside the solution grid [{x_min}, {x_max}]")]
    OutOfRange { x: f64, x_min: f64, x_max: f64 },

    #[error("lattice probability {p} outside [0, 1/2] for sigma = {sigma}")]
    LatticeProbability { p: f64, sigma: f64 },

    #[error("state explosion: {states} lattice states exceed the limit {limit}")]
    StateExplosion { states: usize, limit: usize },

    #[error("K process increased by {increase} at step {step} of path {path}")]
    KIncreasing {
        path: usize,
        step: usize,
        increase: f64,
    },

    #[error("inadmissible control value {value} outside [{low}, {high}]")]
    InadmissibleControl { value: f64, low: f64, high: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Failures of the numerics themselves rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Cfl { .. }
                | Error::NonFinite { .. }
                | Error::NonFiniteState { .. }
                | Error::LatticeProbability { .. }
                | Error::StateExplosion { .. }
                | Error::KIncreasing { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

/// Errors raised by the model, the integrator and the fitting routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("step size underflow at t = {t:e} s (h = {h:e} s)")]
    StepUnderflow { t: f64, h: f64 },

    #[error("non-finite state encountered at t = {t:e} s")]
    NonFinite { t: f64 },

    #[error("fit failed: {reason} (residual rms {residual_rms:e}, {iterations} iterations)")]
    FitFailed {
        reason: String,
        residual_rms: f64,
        iterations: usize,
    },

    #[error("out of range: {0}")]
    Range(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn fit_failed(reason: impl Into<String>, residual_rms: f64, iterations: usize) -> Self {
        Error::FitFailed {
            reason: reason.into(),
            residual_rms,
            iterations,
        }
    }

    /// True for failures of the numerics (integration, fits), as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::StepUnderflow { .. } | Error::NonFinite { .. } | Error::FitFailed { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

/// Errors raised by the pricing, simulation and calibration routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A kernel was evaluated exactly at one of its singular points.
    #[error("kernel `{kernel}` is singular at t={t}, s={s}")]
    Singular { kernel: String, t: f64, s: f64 },

    /// A numerical procedure did not converge or a factorization failed.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Malformed user input (config files, chain CSV, CLI values).
    #[error("input error{}: {msg}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Input { line: Option<usize>, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub(crate) fn input(line: Option<usize>, msg: impl Into<String>) -> Self {
        Error::Input {
            line,
            msg: msg.into(),
        }
    }
}

pub(crate) fn ensure_finite(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be finite, got {value}")))
    }
}

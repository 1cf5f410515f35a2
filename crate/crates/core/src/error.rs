use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// The closed-form statistics only holds for `S < 1`.
    #[error("saturation parameter {saturation} outside the over-damped regime (S < 1)")]
    Regime { saturation: f64 },

    #[error("quadrature did not converge: estimate {estimate}, error {error_estimate}")]
    Quadrature { estimate: f64, error_estimate: f64 },

    #[error("ODE integrator failed at t = {time}: {reason}")]
    Integrator { time: f64, reason: String },

    /// The partial-fraction inverse lost more digits than the working
    /// precision carries.
    #[error("partial-fraction route unstable: {lost_digits:.1} digits lost, {available_digits:.1} available")]
    Cancellation { lost_digits: f64, available_digits: f64 },

    #[error("response covers n <= {available}, photon statistics needs n <= {required}")]
    Coverage { required: usize, available: usize },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}

pub(crate) fn ensure_positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be finite and > 0, got {value}")))
    }
}

pub(crate) fn ensure_probability(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must lie in [0, 1], got {value}")))
    }
}

/// `q > 0`, with `+inf` allowed as the binomial-limit sentinel.
pub(crate) fn ensure_shape(q: f64) -> Result<()> {
    if q > 0.0 && !q.is_nan() {
        Ok(())
    } else {
        Err(Error::invalid("q", format!("must be > 0 (or inf), got {q}")))
    }
}

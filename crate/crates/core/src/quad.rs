//! Thin wrapper over double-exponential quadrature for integrals on
//! `[0, ∞)` of exponentially decaying integrands.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub(crate) struct Integral {
    pub value: f64,
    pub error_estimate: f64,
}

/// Integrates `f` over `[0, ∞)`.
///
/// `fast` is the shortest time scale of the integrand near the origin and
/// `slow` its slowest decay time. Panels grow geometrically from `fast` up
/// to `slow`, then continue in steps of `slow` up to `60·slow`, beyond which
/// the integrand is taken as zero.
pub(crate) fn integrate_half_line<F>(f: F, fast: f64, slow: f64, tolerance: f64) -> Result<Integral>
where
    F: Fn(f64) -> f64,
{
    let fast = fast.min(slow);
    let mut breaks = vec![0.0];
    let mut edge = fast;
    while edge < slow {
        breaks.push(edge);
        edge *= 2.0;
    }
    for i in 1..=60 {
        breaks.push(i as f64 * slow);
    }

    let panel_tol = tolerance / breaks.len() as f64;
    let mut value = 0.0;
    let mut error_estimate = 0.0;
    for w in breaks.windows(2) {
        let out = quadrature::double_exponential::integrate(&f, w[0], w[1], panel_tol);
        value += out.integral;
        error_estimate += out.error_estimate;
    }
    if !value.is_finite() || error_estimate > 100.0 * tolerance {
        return Err(Error::Quadrature { estimate: value, error_estimate });
    }
    Ok(Integral { value, error_estimate })
}

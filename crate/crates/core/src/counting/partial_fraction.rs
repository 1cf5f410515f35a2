//! `P_a` as the inverse Laplace transform of `Π_{k<a} w_k(z) · W_a(z)`,
//! summed over residues in extended precision.

use crate::counting::{check_inputs, count_laplace, CountDistribution, Method};
use crate::error::{Error, Result};
use crate::laplace::DEFAULT_PRECISION_BITS;

#[derive(Debug, Clone, PartialEq)]
pub struct PartialFractionResult {
    pub distribution: CountDistribution,
    /// Worst cancellation over all `a`, in decimal digits.
    pub lost_digits: f64,
    pub available_digits: f64,
}

pub fn count_distribution_partial_fraction(q: f64, p: f64, n: usize) -> Result<PartialFractionResult> {
    count_distribution_partial_fraction_with(q, p, n, DEFAULT_PRECISION_BITS)
}

/// As [`count_distribution_partial_fraction`] with `bits` of working
/// precision. Fails with [`Error::Cancellation`] if any `P_a` keeps fewer
/// than 17 significant digits.
pub fn count_distribution_partial_fraction_with(
    q: f64,
    p: f64,
    n: usize,
    bits: usize,
) -> Result<PartialFractionResult> {
    check_inputs(q, p)?;
    if p == 1.0 {
        return Err(Error::invalid("p", "the residue sum needs a finite time, p < 1"));
    }
    let t = -(-p).ln_1p();
    let mut probabilities = Vec::with_capacity(n + 1);
    let mut lost_digits = 0.0f64;
    let mut available_digits = f64::INFINITY;
    for a in 0..=n {
        let inv = count_laplace(a, n, q, 1.0)?.invert_with_precision(t, bits)?;
        lost_digits = lost_digits.max(inv.lost_digits);
        available_digits = available_digits.min(inv.available_digits);
        probabilities.push(inv.value.max(0.0));
    }
    Ok(PartialFractionResult {
        distribution: CountDistribution::new(probabilities, q, p, Method::PartialFraction)?,
        lost_digits,
        available_digits,
    })
}

//! The Meijer-G closed form of `P_a(q, p | n)`, evaluated literally.
//!
//! ```text
//! P_a = (a!)³ C(n+2q, a) (1−p)^n [ C(n,a) C(n+q,a)         G₁
//!                                + (a+1) C(n,a+1) C(n+q,a)   G₂
//!                                + (a+1)² C(n,a+1) C(n+q,a+1) G₃ ]
//! ```
//!
//! with `G_i = G^{3,0}_{3,3}(1 − p | 1, q+1, 2q+1; b_i)`. Every upper
//! parameter exceeds its lower partner by a nonnegative integer, so each G is
//! the inverse Laplace transform of `1/Π_j (w + b_j)_{a_j − b_j}` at
//! `t = −ln(1 − p)`. Some of these poles sit at negative rates, and the
//! resulting exponential growth is cancelled by `(1 − p)^n`; the residue sum
//! therefore runs in extended precision.

use statrs::function::gamma::ln_gamma;

use crate::counting::{check_inputs, CountDistribution, Method};
use crate::error::{Error, Result};
use crate::laplace::{Factor, LaplaceRational, Term};

pub const MEIJER_PRECISION_BITS: usize = 512;

/// `Γ(x+1) / (Γ(x−y+1) Γ(y+1))` for `x ≥ 0` and integer `y ≥ 0`; zero when
/// `x − y + 1` is a pole of Γ.
pub fn binomial_real(x: f64, y: usize) -> f64 {
    let y = y as f64;
    let rest = x - y + 1.0;
    if rest <= 0.0 && rest.fract() == 0.0 {
        return 0.0;
    }
    (ln_gamma(x + 1.0) - ln_gamma(rest) - ln_gamma(y + 1.0)).exp()
}

/// Laplace-domain form of `G^{3,0}_{3,3}` with integer gaps `a_j − b_j ≥ 0`.
fn g_transform(scale: f64, upper: [f64; 3], lower: [f64; 3]) -> Result<Term> {
    let mut factors = Vec::new();
    for (a, b) in upper.iter().zip(&lower) {
        let gap = a - b;
        if gap < -0.5 || (gap - gap.round()).abs() > 1e-9 {
            return Err(Error::invalid("meijer parameters", format!("a − b = {gap} is not a nonnegative integer")));
        }
        for i in 0..gap.round() as usize {
            factors.push(Factor { numerator: 1.0, rate: b + i as f64 });
        }
    }
    Ok(Term { scale, factors })
}

/// `G^{3,0}_{3,3}(x | upper; lower)` for `0 < x ≤ 1` and integer gaps.
pub fn meijer_g30_33(x: f64, upper: [f64; 3], lower: [f64; 3]) -> Result<f64> {
    if !(x > 0.0 && x <= 1.0) {
        return Err(Error::invalid("x", format!("argument must lie in (0, 1], got {x}")));
    }
    let f = LaplaceRational::from_terms(vec![g_transform(1.0, upper, lower)?]);
    Ok(f.invert_with_precision(-x.ln(), MEIJER_PRECISION_BITS)?.value)
}

fn lower_parameters(q: f64, a: f64) -> [[f64; 3]; 3] {
    [[-a, q - a + 1.0, 2.0 * q - a + 1.0], [-a, q - a, 2.0 * q - a + 1.0], [-a, q - a, 2.0 * q - a]]
}

/// `P_a` for one `a` from the closed form, with the lost digits of the
/// combined residue sum.
pub fn meijer_probability(q: f64, p: f64, n: usize, a: usize) -> Result<(f64, f64)> {
    check_inputs(q, p)?;
    if q.is_infinite() {
        return Err(Error::invalid("q", "the Meijer-G form needs a finite q"));
    }
    if p.is_nan() || p >= 1.0 {
        return Err(Error::invalid("p", "the Meijer-G form needs p < 1"));
    }
    if a > n {
        return Ok((0.0, 0.0));
    }
    let (nf, af) = (n as f64, a as f64);
    let upper = [1.0, q + 1.0, 2.0 * q + 1.0];
    let fact = (ln_gamma(af + 1.0) * 3.0).exp();
    let prefactor = fact * binomial_real(nf + 2.0 * q, a);
    let weights = [
        binomial_real(nf, a) * binomial_real(nf + q, a),
        (af + 1.0) * binomial_real(nf, a + 1) * binomial_real(nf + q, a),
        (af + 1.0).powi(2) * binomial_real(nf, a + 1) * binomial_real(nf + q, a + 1),
    ];
    let mut terms = Vec::new();
    for (w, lower) in weights.iter().zip(lower_parameters(q, af)) {
        if *w != 0.0 {
            terms.push(g_transform(prefactor * w, upper, lower)?);
        }
    }
    let t = -(-p).ln_1p();
    let inv = LaplaceRational::from_terms(terms).invert_with_precision(t, MEIJER_PRECISION_BITS)?;
    Ok((inv.value * (-nf * t).exp(), inv.lost_digits))
}

pub fn count_distribution_meijer(q: f64, p: f64, n: usize) -> Result<CountDistribution> {
    let probabilities =
        (0..=n).map(|a| meijer_probability(q, p, n, a).map(|(v, _)| v.max(0.0))).collect::<Result<Vec<_>>>()?;
    CountDistribution::new(probabilities, q, p, Method::MeijerG)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counting::{count_distribution, count_laplace, total_variation};
    use crate::C64;
    use approx::assert_relative_eq;

    #[test]
    fn binomial_real_values() {
        assert_relative_eq!(binomial_real(10.0, 3), 120.0, max_relative = 1e-13);
        assert_eq!(binomial_real(3.0, 4), 0.0);
        assert_relative_eq!(binomial_real(2.5, 2), 2.5 * 1.5 / 2.0, max_relative = 1e-13);
    }

    #[test]
    fn elementary_g_functions() {
        // 1/w³ -> t²/2
        let x: f64 = 0.3;
        let g = meijer_g30_33(x, [1.0, 1.0, 1.0], [0.0, 0.0, 0.0]).unwrap();
        assert_relative_eq!(g, x.ln().powi(2) / 2.0, max_relative = 1e-14);
        // 1/((w+1)(w+2)(w+3)) -> (x − 2x² + x³)/2
        let g = meijer_g30_33(x, [2.0, 3.0, 4.0], [1.0, 2.0, 3.0]).unwrap();
        assert_relative_eq!(g, (x - 2.0 * x * x + x.powi(3)) / 2.0, max_relative = 1e-13);
        assert!(meijer_g30_33(x, [1.5, 1.0, 1.0], [0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn closed_form_matches_markov() {
        for (q, p, n) in [(10.0, 0.9, 10), (100.0, 0.6, 3), (3.7, 0.5, 6), (2.0, 0.99, 5), (100.0, 0.9, 10)] {
            let g = count_distribution_meijer(q, p, n).unwrap();
            let m = count_distribution(q, p, n).unwrap();
            let tv = total_variation(g.probabilities(), m.probabilities());
            assert!(tv < 1e-10, "q={q} p={p} n={n}: {tv}");
        }
    }

    #[test]
    fn shifted_three_term_transform_matches_product() {
        // With u = τ₀z + n the three-term binomial expression times τ₀/(a+1)
        // reproduces the product of transforms (τ₀ = 1).
        let (n, q) = (6usize, 7.5);
        for a in 0..=n {
            let (nf, af) = (n as f64, a as f64);
            for z in [0.05, 0.4, 1.0, 3.0, 11.0] {
                let u = z + nf;
                let term = |b1: usize, b2: usize, b3: usize, c1: usize, c2: usize| {
                    binomial_real(nf, c1) * binomial_real(nf + q, c2) * binomial_real(nf + 2.0 * q, a)
                        / (binomial_real(u, b1) * binomial_real(q + u, b2) * binomial_real(2.0 * q + u, b3))
                };
                let expr = (term(a + 1, a, a, a, a)
                    + term(a + 1, a + 1, a, a + 1, a)
                    + term(a + 1, a + 1, a + 1, a + 1, a + 1))
                    / (af + 1.0);
                let product = count_laplace(a, n, q, 1.0).unwrap().eval(C64::new(z, 0.0)).re;
                assert_relative_eq!(expr, product, max_relative = 1e-11);
            }
        }
    }
}

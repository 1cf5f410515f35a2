//! Conditional atom-count statistics `P_a(q, p | n)`.
//!
//! The escape of atom `k + 1` after escape `k` takes a hypoexponential delay
//! with rates `(n − k + j q)/τ₀`, `j = 0, 1, 2`. The count distribution over
//! an interval of length `τ` is the transient law of the resulting
//! pure-birth chain of `3n` stages, evaluated at the dimensionless time
//! `T = τ/τ₀ = −ln(1 − p)`. Since τ and τ₀ only enter through `p`, the public
//! API takes `(q, p, n)`.
//!
//! Three routes are provided:
//!
//! * [`markov`]: direct propagation of the stage chain. All arithmetic is on
//!   nonnegative quantities, so it is stable for any `n` and `q`. This is what
//!   [`count_distribution`] uses.
//! * [`partial_fraction`]: residue sum of the product of Laplace transforms,
//!   in extended precision.
//! * [`meijer`]: the three-term Meijer-G closed form, evaluated literally.

pub mod markov;
pub mod meijer;
pub mod partial_fraction;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, ensure_probability, ensure_shape, Error, Result};
use crate::laplace::{Factor, LaplaceRational, Term};

/// How a [`CountDistribution`] was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Markov,
    PartialFraction,
    MeijerG,
    /// Exact `q = ∞` limit.
    Binomial,
    MonteCarlo,
    ExactSector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountDistribution {
    n: usize,
    probabilities: Vec<f64>,
    q: f64,
    p: f64,
    method: Method,
}

impl CountDistribution {
    /// Wraps `probabilities[a]`, `a = 0..=n`. The vector must have length
    /// `n + 1` and nonnegative finite entries.
    pub fn new(probabilities: Vec<f64>, q: f64, p: f64, method: Method) -> Result<Self> {
        if probabilities.is_empty() {
            return Err(Error::invalid("probabilities", "need at least the a = 0 entry"));
        }
        if let Some(bad) = probabilities.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(Error::invalid("probabilities", format!("entries must be finite and >= 0, found {bad}")));
        }
        Ok(CountDistribution { n: probabilities.len() - 1, probabilities, q, p, method })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// `P_a`, zero outside the support.
    pub fn get(&self, a: usize) -> f64 {
        self.probabilities.get(a).copied().unwrap_or(0.0)
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn total(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.probabilities.iter().enumerate().map(|(a, p)| a as f64 * p).sum()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.probabilities
    }
}

/// Total-variation distance `½ Σ_a |x_a − y_a|`, padding the shorter input
/// with zeros.
pub fn total_variation(x: &[f64], y: &[f64]) -> f64 {
    let len = x.len().max(y.len());
    0.5 * (0..len).map(|a| (x.get(a).copied().unwrap_or(0.0) - y.get(a).copied().unwrap_or(0.0)).abs()).sum::<f64>()
}

/// `C(n, a) p^a (1 − p)^{n−a}` for `a = 0..=n`.
pub fn binomial_pmf(n: usize, p: f64) -> Vec<f64> {
    if p == 0.0 || p == 1.0 {
        let mut out = vec![0.0; n + 1];
        out[if p == 0.0 { 0 } else { n }] = 1.0;
        return out;
    }
    let ln_p = p.ln();
    let ln_q = (-p).ln_1p();
    (0..=n)
        .map(|a| {
            let ln_c = statrs::function::factorial::ln_binomial(n as u64, a as u64);
            (ln_c + a as f64 * ln_p + (n - a) as f64 * ln_q).exp()
        })
        .collect()
}

/// Decay rates of the three escape stages after `k` escapes, in units of
/// `1/τ₀`. For `q = ∞` only the first stage remains.
pub(crate) fn stage_rates(k: usize, n: usize, q: f64) -> Vec<f64> {
    let base = (n - k) as f64;
    if q.is_infinite() {
        vec![base]
    } else {
        vec![base, base + q, base + 2.0 * q]
    }
}

fn check_level(k: usize, n: usize, q: f64, tau0: f64) -> Result<()> {
    ensure_shape(q)?;
    ensure_positive("tau0", tau0)?;
    if k >= n {
        return Err(Error::invalid("k", format!("escape index {k} must be below the photon number {n}")));
    }
    Ok(())
}

/// Laplace transform of the waiting time for escape `k + 1` given `n`
/// initial photons: `Π_j λ_j/(z + λ_j)` with `λ_j = (n − k + j q)/τ₀`.
pub fn waiting_laplace(k: usize, n: usize, q: f64, tau0: f64) -> Result<LaplaceRational> {
    check_level(k, n, q, tau0)?;
    let rates: Vec<f64> = stage_rates(k, n, q).into_iter().map(|r| r / tau0).collect();
    Ok(LaplaceRational::hypoexponential(&rates))
}

/// Laplace transform of the probability that no further atom escapes after
/// `a` escapes, as the three-term partial expansion
///
/// ```text
/// 1/(z+λ₀) + λ₀/((z+λ₀)(z+λ₁)) + λ₀λ₁/((z+λ₀)(z+λ₁)(z+λ₂))
/// ```
///
/// which equals `(1 − w(z))/z`. For `a = n` it is `1/z`.
pub fn survival_laplace(a: usize, n: usize, q: f64, tau0: f64) -> Result<LaplaceRational> {
    if a > n {
        return Err(Error::invalid("a", format!("count {a} exceeds photon number {n}")));
    }
    if a == n {
        ensure_shape(q)?;
        ensure_positive("tau0", tau0)?;
        return Ok(LaplaceRational::unit_step());
    }
    check_level(a, n, q, tau0)?;
    let rates: Vec<f64> = stage_rates(a, n, q).into_iter().map(|r| r / tau0).collect();
    let terms = (0..rates.len())
        .map(|m| {
            let mut factors: Vec<Factor> = rates[..m].iter().map(|&r| Factor { numerator: r, rate: r }).collect();
            factors.push(Factor { numerator: 1.0, rate: rates[m] });
            Term { scale: 1.0, factors }
        })
        .collect();
    Ok(LaplaceRational::from_terms(terms))
}

/// `Π_{k<a} w_k(z) · W_a(z)`, whose inverse transform is `P_a(τ)`.
pub fn count_laplace(a: usize, n: usize, q: f64, tau0: f64) -> Result<LaplaceRational> {
    let mut product = survival_laplace(a, n, q, tau0)?;
    for k in 0..a {
        product = waiting_laplace(k, n, q, tau0)?.mul(&product);
    }
    Ok(product)
}

pub(crate) fn check_inputs(q: f64, p: f64) -> Result<()> {
    ensure_shape(q)?;
    ensure_probability("p", p)
}

/// `P_a(q, p | n)` for `a = 0..=n`, by propagating the stage chain.
/// `q = f64::INFINITY` returns the Binomial(n, p) limit.
pub fn count_distribution(q: f64, p: f64, n: usize) -> Result<CountDistribution> {
    check_inputs(q, p)?;
    if q.is_infinite() {
        return CountDistribution::new(binomial_pmf(n, p), q, p, Method::Binomial);
    }
    markov::count_distribution_markov(q, p, n, markov::Propagator::Auto)
}

/// Phenomenological efficiency `η_D = ā_n / n`.
pub fn efficiency(q: f64, p: f64, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("n", "efficiency needs at least one photon"));
    }
    Ok(count_distribution(q, p, n)?.mean() / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    /// `variance / mean`, defined as 1 when both vanish.
    pub fano: f64,
}

pub fn moments(dist: &CountDistribution) -> Moments {
    moments_of(dist.probabilities())
}

pub fn moments_of(probabilities: &[f64]) -> Moments {
    let mean: f64 = probabilities.iter().enumerate().map(|(a, p)| a as f64 * p).sum();
    let variance: f64 = probabilities.iter().enumerate().map(|(a, p)| (a as f64 - mean).powi(2) * p).sum();
    let fano = if mean == 0.0 { 1.0 } else { variance / mean };
    Moments { mean, variance, fano }
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;
    use crate::amplitudes::waiting_density;
    use crate::params::escape_probability;
    use crate::C64;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    // mpmath, 50 digits, hypoexponential stage chain
    const P_Q10_P09_N10: [f64; 11] = [
        2.9999999996999933e-10,
        6.255844157278689e-8,
        4.5191894894178433e-6,
        0.0001492944130620666,
        0.0025019808515218924,
        0.022252125538440864,
        0.10644385114163114,
        0.27047441730365112,
        0.34921508961761641,
        0.20656750081092927,
        0.042391158275216235,
    ];
    const P_Q100_P06_N3: [f64; 4] =
        [0.066908800000000011, 0.30244582966210521, 0.43357889773455276, 0.19706647260334202];

    #[test]
    fn matches_frozen_reference_vectors() {
        let d = count_distribution(10.0, 0.9, 10).unwrap();
        for (a, (&got, &want)) in d.probabilities().iter().zip(&P_Q10_P09_N10).enumerate() {
            assert_relative_eq!(got, want, max_relative = 1e-9, epsilon = 1e-15);
            let _ = a;
        }
        let d = count_distribution(100.0, 0.6, 3).unwrap();
        for (&got, &want) in d.probabilities().iter().zip(&P_Q100_P06_N3) {
            assert_relative_eq!(got, want, max_relative = 1e-11);
        }
    }

    #[test]
    fn frozen_efficiencies() {
        // mpmath oracle values
        for (q, p, eta) in [
            (100.0, 0.9, 0.8862347617),
            (10.0, 0.9, 0.773044937),
            (100.0, 0.6, 0.5639483017),
            (10.0, 0.6, 0.3963789716),
        ] {
            assert!((efficiency(q, p, 10).unwrap() - eta).abs() < 1e-9, "q={q} p={p}");
        }
    }

    #[test]
    fn trivial_cases() {
        assert_eq!(count_distribution(10.0, 0.5, 0).unwrap().probabilities(), &[1.0]);
        let d = count_distribution(10.0, 1.0, 5).unwrap();
        assert_eq!(d.probabilities(), &[0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let d = count_distribution(10.0, 0.0, 5).unwrap();
        assert_eq!(d.probabilities(), &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(count_distribution(-1.0, 0.5, 3).is_err());
        assert!(count_distribution(1.0, 1.5, 3).is_err());
        assert!(efficiency(1.0, 0.5, 0).is_err());
    }

    #[test]
    fn single_photon_is_hypoexponential_cdf() {
        for q in [0.5, 1.0, 7.3, 100.0] {
            for p in [0.1f64, 0.5, 0.9] {
                let t = -(-p).ln_1p();
                let d = waiting_density(1, q, 1.0).unwrap();
                let got = count_distribution(q, p, 1).unwrap().get(1);
                assert!((got - d.cdf(t)).abs() < 1e-10, "q={q} p={p}");
            }
        }
    }

    #[test]
    fn infinite_q_is_binomial() {
        let d = count_distribution(f64::INFINITY, 0.3, 4).unwrap();
        assert_eq!(d.method(), Method::Binomial);
        let exact = [0.2401, 0.4116, 0.2646, 0.0756, 0.0081];
        for (got, want) in d.probabilities().iter().zip(exact) {
            assert_relative_eq!(*got, want, max_relative = 1e-13);
        }
    }

    #[test]
    fn binomial_pmf_matches_exact_rationals() {
        // C(10,a) 8862^a 1138^(10−a) / 10^40 with exact integer products
        type Big = dashu_float::FBig<dashu_float::round::mode::HalfEven, 2>;
        let big = |x: u64| Big::from(x).with_precision(256).value();
        let pmf = binomial_pmf(10, 0.8862);
        for a in 0..=10u64 {
            let c = (1..=a).fold(1u64, |c, k| c * (11 - k) / k);
            let mut num = big(c);
            for _ in 0..a {
                num = &num * &big(8862);
            }
            for _ in a..10 {
                num = &num * &big(1138);
            }
            let mut den = big(1);
            for _ in 0..40 {
                den = &den * &big(10);
            }
            let exact = (&num / &den).to_f64().value();
            assert_relative_eq!(pmf[a as usize], exact, max_relative = 1e-13);
        }
    }

    #[test]
    fn waiting_laplace_normalized_and_limits() {
        let w = waiting_laplace(2, 5, 7.0, 0.3).unwrap();
        assert_relative_eq!(w.eval(C64::new(0.0, 0.0)).re, 1.0, max_relative = 1e-15);
        let w = waiting_laplace(4, 5, 1e12, 2.0).unwrap();
        let z = C64::new(0.7, 0.2);
        let single = 1.0 / (1.0 + 2.0 * z);
        assert!((w.eval(z) - single).norm() < 1e-10);
        assert!(waiting_laplace(5, 5, 1.0, 1.0).is_err());
    }

    #[test]
    fn waiting_laplace_inverts_to_density() {
        let (n, k, q, tau0) = (6, 2, 3.5, 0.8);
        let w = waiting_laplace(k, n, q, tau0).unwrap();
        let dens = waiting_density((n - k) as u64, q, tau0).unwrap();
        for t in [0.01, 0.1, 0.5, 1.0, 3.0] {
            let inv = w.invert(t).unwrap().value;
            assert!((inv - dens.pdf(t)).abs() <= 1e-8 * dens.pdf(t).max(1e-3), "t={t}");
        }
    }

    #[test]
    fn survival_expansion_equals_one_minus_w_over_z() {
        let mut seed = 12345u64;
        let mut next = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (seed >> 11) as f64 / (1u64 << 53) as f64
        };
        let (a, n, q, tau0) = (1, 4, 13.0, 0.5);
        let big_w = survival_laplace(a, n, q, tau0).unwrap();
        let w = waiting_laplace(a, n, q, tau0).unwrap();
        for _ in 0..20 {
            let z = C64::new(0.1 + 5.0 * next(), 10.0 * next() - 5.0);
            let direct = (1.0 - w.eval(z)) / z;
            assert!((big_w.eval(z) - direct).norm() <= 1e-12 * direct.norm());
        }
    }

    #[test]
    fn survival_final_values() {
        let z = C64::new(1e-9, 0.0);
        let full = survival_laplace(3, 3, 2.0, 1.0).unwrap();
        assert_relative_eq!((z * full.eval(z)).re, 1.0);
        let part = survival_laplace(1, 3, 2.0, 1.0).unwrap();
        assert!((z * part.eval(z)).norm() < 1e-8);
        assert!(survival_laplace(4, 3, 2.0, 1.0).is_err());
    }

    #[test]
    fn count_laplace_inverse_matches_markov() {
        let (q, p, n) = (4.0, 0.7f64, 5);
        let t = -(-p).ln_1p();
        let d = count_distribution(q, p, n).unwrap();
        for a in 0..=n {
            let inv = count_laplace(a, n, q, 1.0).unwrap().invert(t).unwrap().value;
            assert!((inv - d.get(a)).abs() < 1e-13, "a={a}");
        }
    }

    #[test]
    fn moments_of_simple_distributions() {
        let delta = CountDistribution::new(vec![0.0, 0.0, 1.0], 1.0, 1.0, Method::Markov).unwrap();
        let m = moments(&delta);
        assert_eq!((m.mean, m.variance), (2.0, 0.0));
        let m = moments_of(&binomial_pmf(12, 0.3));
        assert_relative_eq!(m.variance, 12.0 * 0.3 * 0.7, max_relative = 1e-12);
        assert_relative_eq!(m.fano, 0.7, max_relative = 1e-12);
        assert_eq!(moments_of(&[1.0]).fano, 1.0);
    }

    #[test]
    fn narrower_than_binomial_with_same_mean() {
        for (q, p) in [(10.0, 0.9), (10.0, 0.6)] {
            let d = count_distribution(q, p, 10).unwrap();
            let eta = d.mean() / 10.0;
            assert!(moments(&d).fano < moments_of(&binomial_pmf(10, eta)).fano);
        }
    }

    #[test]
    fn normalization_grid() {
        for n in [1, 5, 10, 20, 30] {
            for q in [1.0, 10.0, 100.0, 1e4] {
                for p in [0.1, 0.5, 0.9, 0.99] {
                    let d = count_distribution(q, p, n).unwrap();
                    assert_eq!(d.probabilities().len(), n + 1);
                    assert!((d.total() - 1.0).abs() <= 1e-10, "n={n} q={q} p={p}: {}", d.total());
                }
            }
        }
    }

    #[test]
    fn approaches_binomial_monotonically() {
        for p in [0.6, 0.9] {
            let reference = binomial_pmf(10, p);
            let tvs: Vec<f64> = [1e2, 1e3, 1e4, 1e5, 1e6]
                .iter()
                .map(|&q| total_variation(count_distribution(q, p, 10).unwrap().probabilities(), &reference))
                .collect();
            assert!(tvs.windows(2).all(|w| w[1] < w[0]), "{tvs:?}");
            assert!(tvs[4] <= 1e-3);
        }
    }

    #[test]
    fn efficiency_tends_to_p() {
        for n in [1, 10, 20] {
            for p in [0.6, 0.9] {
                assert!((efficiency(1e6, p, n).unwrap() - p).abs() <= 1e-3);
            }
        }
    }

    #[test]
    fn depends_on_times_only_through_p() {
        let (tau, tau0) = (1.7e-3, 0.9e-3);
        let a = count_distribution(10.0, escape_probability(tau, tau0), 8).unwrap();
        let b = count_distribution(10.0, escape_probability(2.0 * tau, 2.0 * tau0), 8).unwrap();
        assert_eq!(a.probabilities(), b.probabilities());
    }

    #[test]
    fn tv_padding() {
        assert_relative_eq!(total_variation(&[0.5, 0.5], &[1.0]), 0.5);
    }

    proptest! {
        #[test]
        fn distribution_is_valid(q in 0.2f64..500.0, p in 0.0f64..0.999, n in 0usize..25) {
            let d = count_distribution(q, p, n).unwrap();
            prop_assert!(d.probabilities().iter().all(|&x| x >= 0.0));
            prop_assert!((d.total() - 1.0).abs() <= 1e-10);
            prop_assert_eq!(d.get(n + 1), 0.0);
        }

        #[test]
        fn efficiency_increases_with_p(q in 0.5f64..200.0, p in 0.05f64..0.9, n in 1usize..12) {
            let lo = efficiency(q, p, n).unwrap();
            let hi = efficiency(q, p + 0.05, n).unwrap();
            prop_assert!(hi > lo);
            prop_assert!(lo <= p + 1e-12);
        }
    }
}

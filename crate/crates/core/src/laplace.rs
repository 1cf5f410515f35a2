//! Rational Laplace-domain functions with real poles, and their exact
//! inversion by partial fractions in extended precision.
//!
//! A [`LaplaceRational`] is a sum of terms
//!
//! ```text
//! scale · Π_i  c_i / (z + λ_i)
//! ```
//!
//! Keeping numerators paired with their poles lets waiting-time transforms
//! (`c_i = λ_i`) be evaluated as products of ratios near one, so long
//! products neither overflow nor underflow in `f64`.
//!
//! Inversion sums residues. Partial-fraction expansions of clustered poles
//! alternate in sign and cancel catastrophically, so the residues are
//! accumulated in binary floating point with a configurable number of bits,
//! and the number of decimal digits lost to cancellation is reported with
//! the result. Poles closer than [`POLE_MERGE_TOLERANCE`] are merged into a
//! single higher-order pole, whose residue is computed analytically.

use dashu_float::round::mode::HalfEven;
use dashu_float::FBig;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

type Big = FBig<HalfEven, 2>;

/// Poles with `|λ_i − λ_j| ≤ tol · max(1, |λ_i|)` are treated as one.
pub const POLE_MERGE_TOLERANCE: f64 = 1e-8;

/// Results smaller than this are only resolved in absolute terms.
pub const ABSOLUTE_FLOOR: f64 = 1e-40;

/// Default working precision of the inversion, in bits.
pub const DEFAULT_PRECISION_BITS: usize = 320;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Factor {
    pub numerator: f64,
    /// Decay rate `λ`: the pole sits at `z = −λ`.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub scale: f64,
    pub factors: Vec<Factor>,
}

impl Term {
    pub fn eval(&self, z: C64) -> C64 {
        self.factors.iter().fold(C64::new(self.scale, 0.0), |acc, f| acc * f.numerator / (z + f.rate))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LaplaceRational {
    terms: Vec<Term>,
}

/// Time-domain value of an inverted transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inversion {
    pub value: f64,
    /// `log10(largest residue contribution / max(|value|, ABSOLUTE_FLOOR))`.
    pub lost_digits: f64,
    pub available_digits: f64,
}

impl LaplaceRational {
    pub fn from_terms(terms: Vec<Term>) -> Self {
        LaplaceRational { terms }
    }

    /// `scale · Π c_i/(z + λ_i)` as a single term.
    pub fn product_term(scale: f64, factors: Vec<Factor>) -> Self {
        LaplaceRational { terms: vec![Term { scale, factors }] }
    }

    /// Transform of the constant function 1, i.e. `1/z`.
    pub fn unit_step() -> Self {
        Self::product_term(1.0, vec![Factor { numerator: 1.0, rate: 0.0 }])
    }

    /// `Π λ_i/(z + λ_i)`: the density of a sum of independent exponential
    /// delays with the given rates.
    pub fn hypoexponential(rates: &[f64]) -> Self {
        Self::product_term(1.0, rates.iter().map(|&r| Factor { numerator: r, rate: r }).collect())
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    /// All rates of all terms, in order of appearance.
    pub fn rates(&self) -> impl Iterator<Item = f64> + '_ {
        self.terms.iter().flat_map(|t| t.factors.iter().map(|f| f.rate))
    }

    pub fn eval(&self, z: C64) -> C64 {
        self.terms.iter().map(|t| t.eval(z)).sum()
    }

    /// Product of two transforms (convolution in time).
    pub fn mul(&self, other: &LaplaceRational) -> LaplaceRational {
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                let mut factors = a.factors.clone();
                factors.extend_from_slice(&b.factors);
                terms.push(Term { scale: a.scale * b.scale, factors });
            }
        }
        LaplaceRational { terms }
    }

    pub fn invert(&self, t: f64) -> Result<Inversion> {
        self.invert_with_precision(t, DEFAULT_PRECISION_BITS)
    }

    /// Inverse transform at time `t ≥ 0` by exact residue summation with
    /// `bits` of working precision. Fails with [`Error::Cancellation`] when
    /// fewer than 17 significant digits survive.
    pub fn invert_with_precision(&self, t: f64, bits: usize) -> Result<Inversion> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::invalid("t", format!("inversion time must be finite and >= 0, got {t}")));
        }
        let ctx = Ctx { bits };
        let time = ctx.real(t);
        let mut total = ctx.zero();
        let mut largest = 0.0f64;
        for term in &self.terms {
            let mut coefficient = ctx.real(term.scale);
            for f in &term.factors {
                coefficient = &coefficient * &ctx.real(f.numerator);
            }
            let poles = cluster_poles(term.factors.iter().map(|f| f.rate));
            for i in 0..poles.len() {
                let contribution = &coefficient * &pole_contribution(&ctx, &poles, i, &time);
                largest = largest.max(ctx.abs_f64(&contribution));
                total = &total + &contribution;
            }
        }
        let value = total.to_f64().value();
        let available_digits = bits as f64 * std::f64::consts::LOG10_2;
        let lost_digits =
            if largest == 0.0 { 0.0 } else { (largest / value.abs().max(ABSOLUTE_FLOOR)).log10().max(0.0) };
        if lost_digits > available_digits - 17.0 {
            return Err(Error::Cancellation { lost_digits, available_digits });
        }
        Ok(Inversion { value, lost_digits, available_digits })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Pole {
    rate: f64,
    order: usize,
}

fn cluster_poles(rates: impl Iterator<Item = f64>) -> Vec<Pole> {
    let mut sorted: Vec<f64> = rates.collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("rates are finite"));
    let mut poles: Vec<(f64, usize)> = Vec::new();
    for r in sorted {
        match poles.last_mut() {
            Some((sum, count)) if (r - *sum / *count as f64).abs() <= POLE_MERGE_TOLERANCE * r.abs().max(1.0) => {
                *sum += r;
                *count += 1;
            }
            _ => poles.push((r, 1)),
        }
    }
    poles.into_iter().map(|(sum, order)| Pole { rate: sum / order as f64, order }).collect()
}

struct Ctx {
    bits: usize,
}

impl Ctx {
    fn real(&self, x: f64) -> Big {
        Big::try_from(x).expect("finite input").with_precision(self.bits).value()
    }

    fn int(&self, x: usize) -> Big {
        Big::from(x).with_precision(self.bits).value()
    }

    fn zero(&self) -> Big {
        self.real(0.0)
    }

    fn abs_f64(&self, x: &Big) -> f64 {
        x.to_f64().value().abs()
    }
}

/// Residue contribution of pole `i` to `L⁻¹[Π_j (z + μ_j)^{−m_j}](t)`:
///
/// ```text
/// e^{−μ_i t} Σ_{r<m_i} g_r t^{m_i−1−r}/(m_i−1−r)!
/// ```
///
/// where `g_r` are the Taylor coefficients of `G(u) = Π_{j≠i}(c_j + u)^{−m_j}`,
/// `c_j = μ_j − μ_i`, obtained from `ln G` by the recursion
/// `g_r = (1/r) Σ_{k=1..r} k H_k g_{r−k}` with
/// `H_k = Σ_j m_j (−1)^k / (k c_j^k)`.
fn pole_contribution(ctx: &Ctx, poles: &[Pole], i: usize, t: &Big) -> Big {
    let mu = ctx.real(poles[i].rate);
    let order = poles[i].order;
    let others: Vec<(Big, usize)> =
        poles.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, p)| (&ctx.real(p.rate) - &mu, p.order)).collect();

    let one = ctx.real(1.0);
    let mut g0 = one.clone();
    for (c, m) in &others {
        for _ in 0..*m {
            g0 = &g0 / c;
        }
    }
    let mut g = vec![g0];
    if order > 1 {
        let inv: Vec<Big> = others.iter().map(|(c, _)| &one / c).collect();
        let mut powers = inv.clone();
        let mut h = vec![ctx.zero()];
        for k in 1..order {
            let mut hk = ctx.zero();
            for ((_, m), pw) in others.iter().zip(&powers) {
                hk = &hk + &(pw * &ctx.int(*m));
            }
            hk = &hk / &ctx.int(k);
            if k % 2 == 1 {
                hk = -hk;
            }
            h.push(hk);
            for (pw, iv) in powers.iter_mut().zip(&inv) {
                *pw = &*pw * iv;
            }
        }
        for r in 1..order {
            let mut acc = ctx.zero();
            for k in 1..=r {
                acc = &acc + &(&(&h[k] * &ctx.int(k)) * &g[r - k]);
            }
            g.push(&acc / &ctx.int(r));
        }
    }

    // Σ_r g_r t^{m−1−r}/(m−1−r)!, evaluated as a polynomial in t
    let mut poly = ctx.zero();
    let mut t_pow = one.clone();
    let mut fact = one.clone();
    for s in 0..order {
        if s > 0 {
            t_pow = &t_pow * t;
            fact = &fact * &ctx.int(s);
        }
        let r = order - 1 - s;
        poly = &poly + &(&(&g[r] * &t_pow) / &fact);
    }
    let decay = (-(&mu * t)).exp();
    &poly * &decay
}

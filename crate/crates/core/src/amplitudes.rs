//! Single-absorption transition amplitude `Ψ_{n−1,n}^{A,n}(τ)` and the
//! renormalized atom waiting-time density.
//!
//! The amplitude is the matrix element of the zero-order effective evolution
//! between the all-photonic state `|A,n,n⟩` and the state with one photon
//! absorbed, `|A,n,n−1⟩`:
//!
//! ```text
//! Ψ(τ) = √γ e^{−γnτ/4} ⟨n−1| exp(i(α L_x + β L_z)) |n⟩,
//! α = 2|Ω|τ √M_{A,n},  β = −iγτ/2,
//! ```
//!
//! where `L` is the spin-`n/2` representation on the photon number
//! `m = 0..n` with `L_z = m − n/2`. Only `|Ψ|²` is physical; phases follow
//! the closed forms below and are not meant to be compared across
//! representations.

use num_complex::Complex64 as C64;

use crate::error::{ensure_positive, Error, Result};
use crate::params::{escape_time_scale, m_factor, saturation, shape_from_saturation};
use crate::quad::integrate_half_line;

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// `sin(δ/2)/δ` as a function of `δ²`, even in `δ`.
fn half_sinc(delta_sq: C64) -> C64 {
    if delta_sq.norm() < 1e-8 {
        // |δ| < 1e-4: the closed form is 0/0 here
        C64::new(0.5, 0.0) - delta_sq / 48.0 + delta_sq * delta_sq / 3840.0
    } else {
        let delta = delta_sq.sqrt();
        (delta / 2.0).sin() / delta
    }
}

/// Auxiliaries `ζ` and `z` for arguments `α`, `β`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Auxiliaries {
    pub zeta: C64,
    pub z: C64,
    /// The square root of `1/z` selected by the closed form, `iα sin(δ/2)/δ`.
    pub inv_sqrt_z: C64,
}

pub fn auxiliaries(alpha: C64, beta: C64) -> Auxiliaries {
    let delta_sq = alpha * alpha + beta * beta;
    let sigma = half_sinc(delta_sq);
    let cos_half = (delta_sq.sqrt() / 2.0).cos();
    let zeta = I * alpha * sigma / (cos_half - I * beta * sigma);
    let inv_sqrt_z = I * alpha * sigma;
    let z = -1.0 / (alpha * alpha * sigma * sigma);
    Auxiliaries { zeta, z, inv_sqrt_z }
}

/// Closed-form matrix element `⟨n−1| exp(i(α L_x + β L_z)) |n⟩` in the
/// spin-`n/2` representation:
///
/// ```text
/// √n z^{−n/2} ζ^{n−1} (1 + z)^{n−1}
/// ```
///
/// The branch of `z^{−1/2}` is fixed to `iα sin(δ/2)/δ`, which makes the
/// expression equal to the matrix element itself rather than to it up to a
/// sign.
pub fn matrix_element_closed(alpha: C64, beta: C64, n: u32) -> Result<C64> {
    if n < 1 {
        return Err(Error::invalid("n", "matrix element needs n >= 1"));
    }
    let aux = auxiliaries(alpha, beta);
    if aux.inv_sqrt_z == C64::new(0.0, 0.0) {
        return Ok(C64::new(0.0, 0.0));
    }
    let k = (n - 1) as i32;
    Ok((n as f64).sqrt() * aux.inv_sqrt_z.powi(n as i32) * aux.zeta.powi(k) * (1.0 + aux.z).powi(k))
}

/// Resonant amplitude parameters for `A` atoms and `n` photons.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmplitudeParams {
    pub atoms: u64,
    pub n: u64,
    pub rabi: f64,
    pub gamma: f64,
}

impl AmplitudeParams {
    pub fn new(atoms: u64, n: u64, rabi: f64, gamma: f64) -> Result<Self> {
        if n < 1 {
            return Err(Error::invalid("n", "amplitude needs n >= 1"));
        }
        saturation(atoms, n, rabi, gamma, 0.0)?;
        Ok(AmplitudeParams { atoms, n, rabi, gamma })
    }

    pub fn m_factor(&self) -> f64 {
        m_factor(self.atoms, self.n)
    }

    /// `S_{A,n}` at resonance.
    pub fn saturation(&self) -> f64 {
        saturation(self.atoms, self.n, self.rabi, self.gamma, 0.0).expect("validated on construction")
    }

    pub fn alpha(&self, tau: f64) -> C64 {
        C64::new(2.0 * self.rabi * tau * self.m_factor().sqrt(), 0.0)
    }

    pub fn beta(&self, tau: f64) -> C64 {
        C64::new(0.0, -self.gamma * tau / 2.0)
    }

    /// `δ′ = (γτ/2) sqrt(1 − S)`, real in the over-damped regime.
    pub fn delta_prime(&self, tau: f64) -> Result<f64> {
        let s = self.over_damped()?;
        Ok(self.gamma * tau / 2.0 * (1.0 - s).sqrt())
    }

    fn over_damped(&self) -> Result<f64> {
        let s = self.saturation();
        if s >= 1.0 {
            return Err(Error::Regime { saturation: s });
        }
        Ok(s)
    }

    /// Amplitude from the closed-form matrix element, valid for any `S`.
    pub fn psi_from_matrix_element(&self, tau: f64) -> C64 {
        let n = self.n as u32;
        let elem = matrix_element_closed(self.alpha(tau), self.beta(tau), n).expect("n >= 1");
        self.gamma.sqrt() * (-self.gamma * self.n as f64 * tau / 4.0).exp() * elem
    }

    /// Full hyperbolic form of the amplitude in the over-damped regime,
    ///
    /// ```text
    /// −i √(nγ) e^{−γnτ/4} (−1)^{n−1} [√(1−S) cosh(δ′/2) + sinh(δ′/2)]^{n−1}
    ///    × (1−S)^{−n/2} √S sinh(δ′/2).
    /// ```
    ///
    /// Growing and decaying exponentials are combined before evaluation so
    /// that large `γτ` does not overflow.
    pub fn psi_exact(&self, tau: f64) -> Result<C64> {
        let s = self.over_damped()?;
        let root = (1.0 - s).sqrt();
        let n = self.n as f64;
        let x = self.gamma * tau * root / 4.0;
        let e = (-2.0 * x).exp();
        let one_minus_e = -(-2.0 * x).exp_m1();
        let bracket = (root * (1.0 + e) + one_minus_e) / 2.0;
        let envelope = (-(self.gamma * n * tau / 4.0) * (1.0 - root)).exp();
        let magnitude = (n * self.gamma * s).sqrt()
            * envelope
            * bracket.powi(self.n as i32 - 1)
            * (one_minus_e / 2.0)
            * root.powi(-(self.n as i32));
        let sign = if self.n % 2 == 1 { 1.0 } else { -1.0 };
        Ok(-I * sign * magnitude)
    }

    /// Lowest-order form
    /// `i(−1)^n √(S n γ) e^{−(γτ/4)[n − (n−1)√(1−S)]} sinh((γτ/4)√(1−S))`.
    pub fn psi_lowest_order(&self, tau: f64) -> Result<C64> {
        let s = self.over_damped()?;
        let root = (1.0 - s).sqrt();
        let n = self.n as f64;
        let x = self.gamma * tau * root / 4.0;
        let magnitude = (s * n * self.gamma).sqrt()
            * (-(self.gamma * tau / 4.0) * n * (1.0 - root)).exp()
            * (-(-2.0 * x).exp_m1() / 2.0);
        let sign = if self.n.is_multiple_of(2) { 1.0 } else { -1.0 };
        Ok(I * sign * magnitude)
    }

    /// Reduced parameters `(q, τ₀)` of the waiting-time density built from
    /// `S_{A,n}`.
    pub fn reduced(&self) -> Result<(f64, f64)> {
        let s = self.over_damped()?;
        Ok((shape_from_saturation(s)?, escape_time_scale(s, self.gamma)?))
    }
}

pub fn psi_exact(atoms: u64, n: u64, tau: f64, rabi: f64, gamma: f64) -> Result<C64> {
    AmplitudeParams::new(atoms, n, rabi, gamma)?.psi_exact(tau)
}

pub fn psi_lowest_order(atoms: u64, n: u64, tau: f64, rabi: f64, gamma: f64) -> Result<C64> {
    AmplitudeParams::new(atoms, n, rabi, gamma)?.psi_lowest_order(tau)
}

/// `∫₀^∞ |Ψ(t)|² dt`, the probability of the single-absorption transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionProbability {
    pub value: f64,
    pub error_estimate: f64,
}

impl TransitionProbability {
    /// Departure from certainty, `1 − P`.
    pub fn deviation(&self) -> f64 {
        1.0 - self.value
    }
}

pub fn transition_probability_integral(atoms: u64, n: u64, rabi: f64, gamma: f64) -> Result<TransitionProbability> {
    let amp = AmplitudeParams::new(atoms, n, rabi, gamma)?;
    let s = amp.over_damped()?;
    if s == 0.0 {
        return Ok(TransitionProbability { value: 0.0, error_estimate: 0.0 });
    }
    let (_, tau0) = amp.reduced()?;
    let slow = tau0 / n as f64;
    let integral =
        integrate_half_line(|t| amp.psi_exact(t).map(|p| p.norm_sqr()).unwrap_or(f64::NAN), 1.0 / gamma, slow, 1e-13)?;
    Ok(TransitionProbability { value: integral.value, error_estimate: integral.error_estimate })
}

/// Normalized atom waiting-time density for `n_eff` remaining excitations:
/// the density of a sum of three independent exponential delays with rates
/// `(n_eff + j q)/τ₀`, `j = 0, 1, 2`,
///
/// ```text
/// w(t) = λ₀λ₁λ₂/(2d²) e^{−λ₀t} (1 − e^{−dt})²,   d = q/τ₀.
/// ```
///
/// `q = ∞` degenerates to a single exponential of rate `n_eff/τ₀`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaitingTimeDensity {
    n_eff: u64,
    q: f64,
    tau0: f64,
}

impl WaitingTimeDensity {
    pub fn n_eff(&self) -> u64 {
        self.n_eff
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn tau0(&self) -> f64 {
        self.tau0
    }

    /// Stage rates `λ_j = (n_eff + j q)/τ₀`. With `q = ∞` only `λ₀` is finite.
    pub fn rates(&self) -> [f64; 3] {
        let n = self.n_eff as f64;
        [n / self.tau0, (n + self.q) / self.tau0, (n + 2.0 * self.q) / self.tau0]
    }

    fn spacing(&self) -> f64 {
        self.q / self.tau0
    }

    /// `λ₀λ₁λ₂/(2d²)`, finite in the `q → ∞` limit.
    pub fn normalization(&self) -> f64 {
        let [l0, _, _] = self.rates();
        if self.q.is_infinite() {
            return l0;
        }
        let n = self.n_eff as f64;
        l0 * ((n + self.q) / self.q) * ((n + 2.0 * self.q) / self.q) / 2.0
    }

    pub fn pdf(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        let l0 = self.rates()[0];
        if self.q.is_infinite() {
            return l0 * (-l0 * t).exp();
        }
        let d = self.spacing();
        let v = -(-d * t).exp_m1();
        self.normalization() * (-l0 * t).exp() * v * v
    }

    /// `P(T > t) = e^{−λ₀t} [1 + λ₀v/d + λ₀λ₁v²/(2d²)]`, `v = 1 − e^{−dt}`.
    pub fn survival(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        let [l0, l1, _] = self.rates();
        if self.q.is_infinite() {
            return (-l0 * t).exp();
        }
        let d = self.spacing();
        let v = -(-d * t).exp_m1();
        (-l0 * t).exp() * (1.0 + l0 * v / d + l0 * l1 * v * v / (2.0 * d * d))
    }

    pub fn cdf(&self, t: f64) -> f64 {
        1.0 - self.survival(t)
    }

    /// Hypoexponential mean `τ₀ (1/n + 1/(n+q) + 1/(n+2q))`.
    pub fn mean(&self) -> f64 {
        self.rates().iter().filter(|r| r.is_finite()).map(|r| 1.0 / r).sum()
    }
}

pub fn waiting_density(n_eff: u64, q: f64, tau0: f64) -> Result<WaitingTimeDensity> {
    if n_eff < 1 {
        return Err(Error::invalid("n_eff", "waiting time needs at least one excitation"));
    }
    crate::error::ensure_shape(q)?;
    ensure_positive("tau0", tau0)?;
    Ok(WaitingTimeDensity { n_eff, q, tau0 })
}

type Big = dashu_float::FBig<dashu_float::round::mode::HalfEven, 2>;

#[derive(Clone)]
struct BigC {
    re: Big,
    im: Big,
}

impl BigC {
    fn mul(&self, o: &BigC) -> BigC {
        BigC { re: &(&self.re * &o.re) - &(&self.im * &o.im), im: &(&self.re * &o.im) + &(&self.im * &o.re) }
    }
    fn add(&self, o: &BigC) -> BigC {
        BigC { re: &self.re + &o.re, im: &self.im + &o.im }
    }
    fn scale(&self, x: &Big) -> BigC {
        BigC { re: &self.re * x, im: &self.im * x }
    }
    fn to_c64(&self) -> C64 {
        C64::new(self.re.to_f64().value(), self.im.to_f64().value())
    }
}

/// Reference value for [`matrix_element_closed`], from the Taylor series of
/// `exp(i(α L_x + β L_z)) e_n` in `bits`-bit arithmetic. The couplings are
/// also formed in extended precision. Slow. The closed form can sit many
/// orders below the matrix norm, which puts it out of reach of a double
/// precision exponential.
pub fn matrix_element_series(alpha: C64, beta: C64, n: u32, bits: usize) -> Result<C64> {
    if n == 0 {
        return Err(Error::invalid("n", "must be at least 1"));
    }
    if !(alpha.re.is_finite() && alpha.im.is_finite() && beta.re.is_finite() && beta.im.is_finite()) {
        return Err(Error::invalid("alpha", "arguments must be finite"));
    }
    let n = n as usize;
    let bits = bits.max(64);
    let big = |x: f64| Big::try_from(x).unwrap().with_precision(bits).value();
    let cplx = |z: C64| BigC { re: big(z.re), im: big(z.im) };
    let zero = BigC { re: big(0.0), im: big(0.0) };
    let i_alpha = cplx(I * alpha);
    let i_beta = cplx(I * beta);
    let half = big(0.5);
    let diag: Vec<BigC> = (0..=n).map(|m| i_beta.scale(&big(m as f64 - n as f64 / 2.0))).collect();
    let off: Vec<BigC> = (0..n).map(|m| i_alpha.scale(&(&big(((n - m) * (m + 1)) as f64).sqrt() * &half))).collect();
    let mut term = vec![zero.clone(); n + 1];
    term[n] = BigC { re: big(1.0), im: big(0.0) };
    let mut sum = term.clone();
    let mut k = 0usize;
    loop {
        k += 1;
        let inv_k = &big(1.0) / &big(k as f64);
        let next: Vec<BigC> = (0..=n)
            .map(|m| {
                let mut v = diag[m].mul(&term[m]);
                if m > 0 {
                    v = v.add(&off[m - 1].mul(&term[m - 1]));
                }
                if m < n {
                    v = v.add(&off[m].mul(&term[m + 1]));
                }
                v.scale(&inv_k)
            })
            .collect();
        term = next;
        for (s, t) in sum.iter_mut().zip(&term) {
            *s = s.add(t);
        }
        let largest = term.iter().map(|t| t.to_c64().norm()).fold(0.0, f64::max);
        if k > 10 && largest < 1e-45 {
            break;
        }
    }
    Ok(sum[n - 1].to_c64())
}

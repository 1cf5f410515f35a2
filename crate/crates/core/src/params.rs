//! Physical inputs and the derived detector parameters.
//!
//! All inputs are SI: kilograms, radians per second, inverse metres. The
//! chain is
//!
//! ```text
//! (m, ν, k₀)      -> δx₀, η, v_g, γ
//! (A, N, Ω, γ, Δ) -> S_{A,N}
//! (S, γ, τ)       -> q, τ₀, p
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};

/// Reduced Planck constant (CODATA 2018, exact), J·s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Speed of light in vacuum (exact), m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Raw experimental inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConfig {
    /// Atomic mass `m` (kg).
    pub atom_mass: f64,
    /// Trap angular frequency `ν` (rad/s).
    pub trap_frequency: f64,
    /// Photon wavenumber `k₀` (1/m).
    pub photon_wavenumber: f64,
    /// Vacuum Rabi frequency `|Ω|` (rad/s), transverse mode overlap folded in.
    pub rabi_frequency: f64,
    /// Detuning `Δ` (rad/s), any sign.
    pub detuning: f64,
    /// Number of condensed atoms `A`.
    pub atom_number: u64,
    /// Electronic transition frequency `ω_eg` (rad/s); only needed for the
    /// resonance condition.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transition_frequency: Option<f64>,
}

impl PhysicalConfig {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("atom_mass", self.atom_mass)?;
        ensure_positive("trap_frequency", self.trap_frequency)?;
        ensure_positive("photon_wavenumber", self.photon_wavenumber)?;
        ensure_positive("rabi_frequency", self.rabi_frequency)?;
        if !self.detuning.is_finite() {
            return Err(Error::invalid("detuning", "must be finite"));
        }
        if self.atom_number == 0 {
            return Err(Error::invalid("atom_number", "must be >= 1"));
        }
        if let Some(w) = self.transition_frequency {
            ensure_positive("transition_frequency", w)?;
        }
        Ok(())
    }
}

/// Length, velocity and rate scales of the trap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapScales {
    /// rms position spread of the trap ground level, `δx₀ = sqrt(ħ/(2mν))` (m).
    pub ground_spread: f64,
    /// Lamb–Dicke parameter `η = k₀ δx₀`.
    pub lamb_dicke: f64,
    /// Group velocity of the excited wave packet (m/s).
    pub group_velocity: f64,
    /// Escape rate `γ` (1/s), including the `1 + (2η)⁻²` bracket.
    pub escape_rate: f64,
}

impl TrapScales {
    /// The large-η form `πħk₀²/(mη)`, dropping the `1 + (2η)⁻²` bracket.
    pub fn escape_rate_large_eta(&self) -> f64 {
        self.escape_rate / recoil_bracket(self.lamb_dicke)
    }
}

fn recoil_bracket(eta: f64) -> f64 {
    1.0 + (2.0 * eta).powi(-2)
}

pub fn derive_trap_scales(cfg: &PhysicalConfig) -> Result<TrapScales> {
    ensure_positive("atom_mass", cfg.atom_mass)?;
    ensure_positive("trap_frequency", cfg.trap_frequency)?;
    ensure_positive("photon_wavenumber", cfg.photon_wavenumber)?;
    let m = cfg.atom_mass;
    let k0 = cfg.photon_wavenumber;
    let ground_spread = (HBAR / (2.0 * m * cfg.trap_frequency)).sqrt();
    let lamb_dicke = k0 * ground_spread;
    let bracket = recoil_bracket(lamb_dicke);
    let group_velocity = HBAR * k0 / (2.0 * m) * bracket;
    // γ = 2π / (time of flight over δx₀)
    let escape_rate = std::f64::consts::PI * HBAR * k0 * k0 / (m * lamb_dicke) * bracket;
    Ok(TrapScales { ground_spread, lamb_dicke, group_velocity, escape_rate })
}

/// Photon wavenumber satisfying `c k₀ = ω_eg − ν/4`.
pub fn resonance_wavenumber(cfg: &PhysicalConfig) -> Result<f64> {
    let omega_eg = cfg
        .transition_frequency
        .ok_or_else(|| Error::invalid("transition_frequency", "required for the resonance condition"))?;
    ensure_positive("transition_frequency", omega_eg)?;
    if !(cfg.trap_frequency >= 0.0 && cfg.trap_frequency.is_finite()) {
        return Err(Error::invalid("trap_frequency", "must be finite and >= 0"));
    }
    Ok((omega_eg - cfg.trap_frequency / 4.0) / SPEED_OF_LIGHT)
}

/// `M_{A,N} = A − (N − 1)/2`.
pub fn m_factor(atoms: u64, excitations: u64) -> f64 {
    atoms as f64 - (excitations as f64 - 1.0) / 2.0
}

/// Saturation parameter `S_{A,N} = 4|Ω|² M_{A,N} / (Δ² + (γ/2)²)`.
pub fn saturation(atoms: u64, excitations: u64, rabi: f64, gamma: f64, detuning: f64) -> Result<f64> {
    if atoms == 0 {
        return Err(Error::invalid("atoms", "must be >= 1"));
    }
    if !(rabi >= 0.0 && rabi.is_finite()) {
        return Err(Error::invalid("rabi", format!("must be finite and >= 0, got {rabi}")));
    }
    ensure_positive("gamma", gamma)?;
    if !detuning.is_finite() {
        return Err(Error::invalid("detuning", "must be finite"));
    }
    let m = m_factor(atoms, excitations);
    if m <= 0.0 {
        return Err(Error::invalid(
            "excitations",
            format!("M = A - (N-1)/2 = {m} must be > 0 (A = {atoms}, N = {excitations})"),
        ));
    }
    Ok(4.0 * rabi * rabi * m / (detuning * detuning + 0.25 * gamma * gamma))
}

/// `(q, τ₀, p)` of the over-damped regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedParams {
    /// Shape coefficient; `+inf` at `S = 0`.
    pub q: f64,
    /// Effective escape time scale (s); `+inf` at `S = 0`.
    pub tau0: f64,
    /// Single-atom escape probability `1 − exp(−τ/τ₀)`.
    pub p: f64,
}

/// `1 − sqrt(1 − S)`, without cancellation at small `S`.
fn one_minus_root(s: f64) -> f64 {
    s / (1.0 + (1.0 - s).sqrt())
}

pub fn shape_from_saturation(s: f64) -> Result<f64> {
    check_saturation(s)?;
    if s == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((1.0 - s).sqrt() / one_minus_root(s))
}

/// Inverse of [`shape_from_saturation`]: `S(q) = (1 + 2q)/(1 + q)²`.
pub fn saturation_from_shape(q: f64) -> f64 {
    if q.is_infinite() {
        0.0
    } else {
        (1.0 + 2.0 * q) / ((1.0 + q) * (1.0 + q))
    }
}

/// `1/τ₀ = (γ/2)(1 − sqrt(1 − S))`.
pub fn escape_time_scale(s: f64, gamma: f64) -> Result<f64> {
    check_saturation(s)?;
    ensure_positive("gamma", gamma)?;
    Ok(1.0 / (0.5 * gamma * one_minus_root(s)))
}

/// `p = 1 − exp(−τ/τ₀)`.
pub fn escape_probability(tau: f64, tau0: f64) -> f64 {
    -(-tau / tau0).exp_m1()
}

/// Integration time that yields escape probability `p`: `τ = −τ₀ ln(1 − p)`.
pub fn integration_time(p: f64, tau0: f64) -> f64 {
    -tau0 * (-p).ln_1p()
}

fn check_saturation(s: f64) -> Result<()> {
    if s.is_nan() || s < 0.0 {
        return Err(Error::invalid("saturation", format!("must be >= 0, got {s}")));
    }
    if s >= 1.0 {
        return Err(Error::Regime { saturation: s });
    }
    Ok(())
}

pub fn reduced_params(s: f64, gamma: f64, tau: f64) -> Result<ReducedParams> {
    if tau.is_nan() || tau < 0.0 {
        return Err(Error::invalid("tau", format!("must be >= 0, got {tau}")));
    }
    let q = shape_from_saturation(s)?;
    let tau0 = escape_time_scale(s, gamma)?;
    Ok(ReducedParams { q, tau0, p: escape_probability(tau, tau0) })
}

/// Everything downstream modules need, derived from a [`PhysicalConfig`] and
/// an integration time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorParams {
    pub ground_spread: f64,
    pub lamb_dicke: f64,
    pub group_velocity: f64,
    pub escape_rate: f64,
    /// Low-photon saturation `S_A = S_{A,1}`.
    pub saturation: f64,
    pub q: f64,
    pub tau0: f64,
    pub escape_probability: f64,
}

impl DetectorParams {
    pub fn from_config(cfg: &PhysicalConfig, integration_time: f64) -> Result<Self> {
        cfg.validate()?;
        let scales = derive_trap_scales(cfg)?;
        let s = saturation(cfg.atom_number, 1, cfg.rabi_frequency, scales.escape_rate, cfg.detuning)?;
        let reduced = reduced_params(s, scales.escape_rate, integration_time)?;
        Ok(DetectorParams {
            ground_spread: scales.ground_spread,
            lamb_dicke: scales.lamb_dicke,
            group_velocity: scales.group_velocity,
            escape_rate: scales.escape_rate,
            saturation: s,
            q: reduced.q,
            tau0: reduced.tau0,
            escape_probability: reduced.p,
        })
    }
}

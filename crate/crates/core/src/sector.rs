//! Exact count statistics from the coupled conditional density operators.
//!
//! The effective Hamiltonian conserves atom number `A` and excitation number
//! `N`, and in the basis `|A, N, m⟩` (`m` photons, `N − m` excited atoms) it
//! is tridiagonal. An escape maps `|A, N, m⟩ → √(N − m) |A−1, N−1, m⟩`. The
//! density conditioned on `a` escapes lives in sector `(A − a, n − a)` and
//! obeys
//!
//! ```text
//! dρ_a/dt = −i (H_a ρ_a − ρ_a H_a†) + γ E ρ_{a−1} E†
//! ```
//!
//! so `P_a(τ) = tr ρ_a(τ)`. Frequencies are in rad/s with ħ = 1.

use nalgebra::DMatrix;

use crate::counting::{CountDistribution, Method};
use crate::error::{ensure_positive, Error, Result};
use crate::params::{escape_probability, escape_time_scale, m_factor, saturation, shape_from_saturation};
use crate::C64;

const I: C64 = C64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SectorBasis {
    pub atoms: u64,
    pub excitations: u64,
}

impl SectorBasis {
    pub fn new(atoms: u64, excitations: u64) -> Result<Self> {
        if excitations > atoms {
            return Err(Error::invalid(
                "excitations",
                format!("N = {excitations} exceeds the atom number A = {atoms}"),
            ));
        }
        Ok(SectorBasis { atoms, excitations })
    }

    pub fn dim(&self) -> usize {
        self.excitations as usize + 1
    }
}

/// Which coupling the Hamiltonian uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expansion {
    /// `√((N−m+1)(A−N+m) m)`.
    Exact,
    /// `√M_{A,N} · √((N−m+1) m)` from the large-`A` expansion.
    ZeroOrder,
}

/// Tridiagonal effective Hamiltonian of one sector.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveHamiltonianSector {
    pub basis: SectorBasis,
    /// `H[m][m]`, `m = 0..=N`.
    pub diagonal: Vec<C64>,
    /// `H[m][m−1] = H[m−1][m]` at index `m − 1`.
    pub coupling: Vec<f64>,
    pub rabi: f64,
    pub detuning: f64,
    pub gamma: f64,
}

impl EffectiveHamiltonianSector {
    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let d = self.dim();
        let mut h = DMatrix::zeros(d, d);
        for m in 0..d {
            h[(m, m)] = self.diagonal[m];
        }
        for (k, &c) in self.coupling.iter().enumerate() {
            h[(k + 1, k)] = C64::new(c, 0.0);
            h[(k, k + 1)] = C64::new(c, 0.0);
        }
        h
    }
}

fn check_rates(rabi: f64, detuning: f64, gamma: f64) -> Result<()> {
    if !(rabi >= 0.0 && rabi.is_finite()) {
        return Err(Error::invalid("rabi", format!("must be finite and >= 0, got {rabi}")));
    }
    if !detuning.is_finite() {
        return Err(Error::invalid("detuning", "must be finite"));
    }
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::invalid("gamma", format!("must be finite and >= 0, got {gamma}")));
    }
    Ok(())
}

fn build(
    atoms: u64,
    excitations: u64,
    rabi: f64,
    detuning: f64,
    gamma: f64,
    expansion: Expansion,
) -> Result<EffectiveHamiltonianSector> {
    let basis = SectorBasis::new(atoms, excitations)?;
    check_rates(rabi, detuning, gamma)?;
    let (a, n) = (atoms as f64, excitations as f64);
    let delta_prime = C64::new(detuning, gamma / 2.0);
    let diagonal = (0..basis.dim()).map(|m| -delta_prime * (n - m as f64 - a / 2.0) - I * (gamma * a / 4.0)).collect();
    let coupling = (1..basis.dim())
        .map(|m| {
            let m = m as f64;
            let photon = ((n - m + 1.0) * m).sqrt();
            match expansion {
                Expansion::Exact => -rabi * ((n - m + 1.0) * (a - n + m) * m).sqrt(),
                Expansion::ZeroOrder => -rabi * m_factor(atoms, excitations).sqrt() * photon,
            }
        })
        .collect();
    Ok(EffectiveHamiltonianSector { basis, diagonal, coupling, rabi, detuning, gamma })
}

pub fn build_heff(
    atoms: u64,
    excitations: u64,
    rabi: f64,
    detuning: f64,
    gamma: f64,
) -> Result<EffectiveHamiltonianSector> {
    build(atoms, excitations, rabi, detuning, gamma, Expansion::Exact)
}

pub fn build_heff_zero_order(
    atoms: u64,
    excitations: u64,
    rabi: f64,
    detuning: f64,
    gamma: f64,
) -> Result<EffectiveHamiltonianSector> {
    if m_factor(atoms, excitations) <= 0.0 {
        return Err(Error::invalid("excitations", "M = A − (N−1)/2 must be > 0"));
    }
    build(atoms, excitations, rabi, detuning, gamma, Expansion::ZeroOrder)
}

/// Unnormalized densities `ρ_a`, `a = 0..=n`, each on sector `(A−a, n−a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalDensity {
    pub blocks: Vec<DMatrix<C64>>,
}

impl ConditionalDensity {
    pub fn traces(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| b.trace().re).collect()
    }

    /// Largest `‖ρ_a − ρ_a†‖` entry over all blocks.
    pub fn hermiticity_defect(&self) -> f64 {
        self.blocks.iter().map(|b| (b - b.adjoint()).camax()).fold(0.0, f64::max)
    }
}

/// Coupled block system, flattened column-major into one complex vector.
struct BlockSystem {
    hamiltonians: Vec<EffectiveHamiltonianSector>,
    offsets: Vec<usize>,
    gamma: f64,
    len: usize,
}

impl BlockSystem {
    fn new(atoms: u64, n: u64, rabi: f64, detuning: f64, gamma: f64, expansion: Expansion) -> Result<Self> {
        let mut hamiltonians = Vec::new();
        let mut offsets = Vec::new();
        let mut len = 0;
        for a in 0..=n {
            let h = build(atoms - a, n - a, rabi, detuning, gamma, expansion)?;
            offsets.push(len);
            len += h.dim() * h.dim();
            hamiltonians.push(h);
        }
        Ok(BlockSystem { hamiltonians, offsets, gamma, len })
    }

    fn initial(&self) -> Vec<C64> {
        let mut y = vec![C64::new(0.0, 0.0); self.len];
        let d = self.hamiltonians[0].dim();
        y[(d - 1) * d + (d - 1)] = C64::new(1.0, 0.0);
        y
    }

    fn derivative(&self, y: &[C64], dy: &mut [C64]) {
        for (a, h) in self.hamiltonians.iter().enumerate() {
            let d = h.dim();
            let off = self.offsets[a];
            let rho = &y[off..off + d * d];
            let at = |i: usize, j: usize| rho[j * d + i];
            for j in 0..d {
                for i in 0..d {
                    // (Hρ)_{ij} − (ρH†)_{ij}
                    let mut h_rho = h.diagonal[i] * at(i, j);
                    if i > 0 {
                        h_rho += h.coupling[i - 1] * at(i - 1, j);
                    }
                    if i + 1 < d {
                        h_rho += h.coupling[i] * at(i + 1, j);
                    }
                    let mut rho_hd = at(i, j) * h.diagonal[j].conj();
                    if j > 0 {
                        rho_hd += at(i, j - 1) * h.coupling[j - 1];
                    }
                    if j + 1 < d {
                        rho_hd += at(i, j + 1) * h.coupling[j];
                    }
                    dy[off + j * d + i] = -I * (h_rho - rho_hd);
                }
            }
            if a > 0 {
                // γ E ρ_{a−1} E†, E[m][m] = √(N_{a−1} − m)
                let dp = self.hamiltonians[a - 1].dim();
                let prev = &y[self.offsets[a - 1]..self.offsets[a - 1] + dp * dp];
                let n_prev = (dp - 1) as f64;
                for j in 0..d {
                    for i in 0..d {
                        let e = ((n_prev - i as f64) * (n_prev - j as f64)).sqrt();
                        dy[off + j * d + i] += self.gamma * e * prev[j * dp + i];
                    }
                }
            }
        }
    }

    fn unpack(&self, y: &[C64]) -> ConditionalDensity {
        let blocks = self
            .hamiltonians
            .iter()
            .zip(&self.offsets)
            .map(|(h, &off)| {
                let d = h.dim();
                DMatrix::from_column_slice(d, d, &y[off..off + d * d])
            })
            .collect();
        ConditionalDensity { blocks }
    }
}

// Dormand–Prince 5(4) tableau; the system is autonomous, so the nodes are not needed
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] =
    [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

const MAX_STEPS: usize = 10_000_000;

/// Adaptive integration of `y' = f(y)` to each of the increasing `times`,
/// calling `record` at each one.
fn integrate<F, R>(f: F, y0: Vec<C64>, times: &[f64], tol: f64, mut record: R) -> Result<()>
where
    F: Fn(&[C64], &mut [C64]),
    R: FnMut(usize, &[C64]),
{
    let len = y0.len();
    let mut y = y0;
    let mut t = 0.0;
    let mut k: Vec<Vec<C64>> = vec![vec![C64::new(0.0, 0.0); len]; 7];
    let mut stage = vec![C64::new(0.0, 0.0); len];
    let mut y_new = vec![C64::new(0.0, 0.0); len];
    f(&y, &mut k[0]);
    let scale0 = k[0].iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-300);
    let mut h = (0.01 / scale0).min(times.last().copied().unwrap_or(0.0).max(1e-300));
    let mut steps = 0usize;

    for (idx, &target) in times.iter().enumerate() {
        if target < t {
            return Err(Error::invalid("times", "output times must be increasing and >= 0"));
        }
        while t < target {
            steps += 1;
            if steps > MAX_STEPS {
                return Err(Error::Integrator { time: t, reason: "step budget exhausted".into() });
            }
            let last = t + h >= target;
            let step = if last { target - t } else { h };
            for s in 1..7 {
                for i in 0..len {
                    let mut acc = C64::new(0.0, 0.0);
                    for (r, kr) in k.iter().enumerate().take(s) {
                        if A[s][r] != 0.0 {
                            acc += kr[i] * A[s][r];
                        }
                    }
                    stage[i] = y[i] + acc * step;
                }
                f(&stage, &mut k[s]);
            }
            let mut err = 0.0f64;
            for i in 0..len {
                let mut hi = C64::new(0.0, 0.0);
                let mut lo = C64::new(0.0, 0.0);
                for s in 0..7 {
                    hi += k[s][i] * B5[s];
                    lo += k[s][i] * B4[s];
                }
                y_new[i] = y[i] + hi * step;
                let sc = tol + tol * y[i].norm().max(y_new[i].norm());
                let e = ((hi - lo) * step).norm() / sc;
                err = err.max(e);
            }
            if !err.is_finite() {
                return Err(Error::Integrator { time: t, reason: "non-finite error estimate".into() });
            }
            if err <= 1.0 {
                t = if last { target } else { t + step };
                std::mem::swap(&mut y, &mut y_new);
                // first-same-as-last: the seventh stage is f(y_new)
                let (first, rest) = k.split_at_mut(1);
                first[0].copy_from_slice(&rest[5]);
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if err <= 1.0 && last {
                // keep the step length that was in use before clipping
                h = h.max(step * factor);
            } else {
                h = step * factor;
            }
            if h < 1e-14 * target.max(1e-300) {
                return Err(Error::Integrator { time: t, reason: format!("step size underflow (h = {h:e})") });
            }
        }
        record(idx, &y);
    }
    Ok(())
}

/// Options for [`exact_count_history`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectorOptions {
    pub tolerance: f64,
    pub expansion: Expansion,
}

impl Default for SectorOptions {
    fn default() -> Self {
        SectorOptions { tolerance: 1e-10, expansion: Expansion::Exact }
    }
}

fn validate(atoms: u64, n: u64, rabi: f64, detuning: f64, gamma: f64, tol: f64) -> Result<()> {
    if n > atoms {
        return Err(Error::invalid("n", format!("photon number {n} exceeds the atom number {atoms}")));
    }
    check_rates(rabi, detuning, gamma)?;
    ensure_positive("solver_tol", tol)
}

/// Conditional densities at each of the increasing `times`.
pub fn exact_conditional_densities(
    atoms: u64,
    n: u64,
    times: &[f64],
    rabi: f64,
    detuning: f64,
    gamma: f64,
    options: SectorOptions,
) -> Result<Vec<ConditionalDensity>> {
    validate(atoms, n, rabi, detuning, gamma, options.tolerance)?;
    let system = BlockSystem::new(atoms, n, rabi, detuning, gamma, options.expansion)?;
    let mut out = Vec::with_capacity(times.len());
    integrate(
        |y, dy| system.derivative(y, dy),
        system.initial(),
        times,
        options.tolerance,
        |_, y| out.push(system.unpack(y)),
    )?;
    Ok(out)
}

/// `P_a(t)` for each of the increasing `times`.
pub fn exact_count_history(
    atoms: u64,
    n: u64,
    times: &[f64],
    rabi: f64,
    detuning: f64,
    gamma: f64,
    options: SectorOptions,
) -> Result<Vec<Vec<f64>>> {
    Ok(exact_conditional_densities(atoms, n, times, rabi, detuning, gamma, options)?
        .iter()
        .map(ConditionalDensity::traces)
        .collect())
}

/// Exact `P_a(τ | n)` with the exact sector couplings. The reported `(q, p)`
/// are those implied by `S_A` when `S_A < 1` and NaN otherwise.
pub fn exact_count_statistics(
    atoms: u64,
    n: u64,
    tau: f64,
    rabi: f64,
    detuning: f64,
    gamma: f64,
    solver_tol: f64,
) -> Result<CountDistribution> {
    exact_count_statistics_with(
        atoms,
        n,
        tau,
        rabi,
        detuning,
        gamma,
        SectorOptions { tolerance: solver_tol, expansion: Expansion::Exact },
    )
}

pub fn exact_count_statistics_with(
    atoms: u64,
    n: u64,
    tau: f64,
    rabi: f64,
    detuning: f64,
    gamma: f64,
    options: SectorOptions,
) -> Result<CountDistribution> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::invalid("tau", format!("must be finite and >= 0, got {tau}")));
    }
    let traces = exact_count_history(atoms, n, &[tau], rabi, detuning, gamma, options)?.remove(0);
    let probabilities = traces.into_iter().map(|x| x.max(0.0)).collect();
    let (q, p) = match (gamma > 0.0).then(|| saturation(atoms, 1, rabi, gamma, detuning)) {
        Some(Ok(s)) if s < 1.0 => {
            let tau0 = escape_time_scale(s, gamma)?;
            (shape_from_saturation(s)?, escape_probability(tau, tau0))
        }
        _ => (f64::NAN, f64::NAN),
    };
    CountDistribution::new(probabilities, q, p, Method::ExactSector)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amplitudes::AmplitudeParams;
    use crate::counting::{count_distribution, total_variation};
    use crate::params::reduced_params;
    use approx::assert_relative_eq;

    fn sorted_eigenvalues(h: &EffectiveHamiltonianSector) -> Vec<C64> {
        let mut ev: Vec<C64> = nalgebra::Schur::new(h.to_dense()).eigenvalues().unwrap().iter().cloned().collect();
        ev.sort_by(|a, b| a.im.total_cmp(&b.im).then(a.re.total_cmp(&b.re)));
        ev
    }

    #[test]
    fn small_sectors() {
        let h = build_heff(10, 0, 0.3, 0.1, 2.0).unwrap();
        assert_eq!(h.dim(), 1);
        assert_eq!(h.diagonal[0].im, 0.0);
        let h = build_heff(1, 1, 0.3, 0.0, 2.0).unwrap();
        assert_eq!(h.coupling, vec![-0.3]);
        assert!(build_heff(3, 4, 0.3, 0.0, 1.0).is_err());
    }

    #[test]
    fn anti_hermitian_part_counts_excited_atoms() {
        let (gamma, n) = (1.7, 5u64);
        let h = build_heff(40, n, 0.2, 0.8, gamma).unwrap();
        for (m, d) in h.diagonal.iter().enumerate() {
            assert_relative_eq!(d.im, -gamma / 2.0 * (n as f64 - m as f64), epsilon = 1e-14);
        }
    }

    #[test]
    fn trace_identity() {
        let gamma = 1.3;
        let h = build_heff(100, 1, 0.01, 0.0, gamma).unwrap();
        let sum: C64 = sorted_eigenvalues(&h).iter().sum();
        assert_relative_eq!(sum.im, -gamma / 2.0, max_relative = 1e-12);
    }

    #[test]
    fn zero_order_coupling_error() {
        let (a, n) = (1000u64, 10u64);
        let exact = build_heff(a, n, 1.0, 0.0, 1.0).unwrap();
        let zero = build_heff_zero_order(a, n, 1.0, 0.0, 1.0).unwrap();
        for (e, z) in exact.coupling.iter().zip(&zero.coupling) {
            assert!(((e - z) / e).abs() <= n as f64 / (2.0 * a as f64));
        }
        assert_eq!(exact.diagonal, zero.diagonal);
        // N = 1: both couplings are √A
        let e1 = build_heff(50, 1, 1.0, 0.0, 1.0).unwrap();
        let z1 = build_heff_zero_order(50, 1, 1.0, 0.0, 1.0).unwrap();
        assert_relative_eq!(e1.coupling[0], z1.coupling[0], max_relative = 1e-15);
    }

    #[test]
    fn zero_order_spectrum() {
        let gamma = 1.0;
        let rabi = (0.05 * gamma * gamma / (16.0 * 1000.0f64)).sqrt();
        let exact = sorted_eigenvalues(&build_heff(1000, 4, rabi, 0.0, gamma).unwrap());
        let zero = sorted_eigenvalues(&build_heff_zero_order(1000, 4, rabi, 0.0, gamma).unwrap());
        for (e, z) in exact.iter().zip(&zero) {
            assert!((e - z).norm() <= 1e-2 * e.norm(), "{e} vs {z}");
        }
    }

    #[test]
    fn trivial_statistics() {
        let d = exact_count_statistics(10, 0, 5.0, 0.1, 0.0, 1.0, 1e-10).unwrap();
        assert_eq!(d.probabilities(), &[1.0]);
        let d = exact_count_statistics(10, 3, 5.0, 0.0, 0.0, 1.0, 1e-10).unwrap();
        assert_eq!(d.probabilities(), &[1.0, 0.0, 0.0, 0.0]);
        assert!(exact_count_statistics(2, 3, 1.0, 0.1, 0.0, 1.0, 1e-10).is_err());
    }

    #[test]
    fn conservation_and_monotonicity() {
        let tol = 1e-10;
        let times: Vec<f64> = (1..=40).map(|k| k as f64 * 2.5).collect();
        let gamma = 1.0;
        let rabi = (0.05 * gamma * gamma / (16.0 * 60.0f64)).sqrt();
        let densities = exact_conditional_densities(
            60,
            3,
            &times,
            rabi,
            0.2,
            gamma,
            SectorOptions { tolerance: tol, ..Default::default() },
        )
        .unwrap();
        let history: Vec<Vec<f64>> = densities.iter().map(ConditionalDensity::traces).collect();
        for (rho, traces) in densities.iter().zip(&history) {
            assert!((traces.iter().sum::<f64>() - 1.0).abs() <= 10.0 * tol);
            assert!(rho.hermiticity_defect() < 1e-12);
        }
        for w in history.windows(2) {
            assert!(w[1][0] <= w[0][0] + 1e-12);
            for a in 1..w[0].len() {
                // single jumps leave block a only through the next escape,
                // so monotonicity holds for the final block
                if a == w[0].len() - 1 {
                    assert!(w[1][a] >= w[0][a] - 1e-12);
                }
            }
        }
    }

    #[test]
    fn no_escapes_without_damping() {
        let h = exact_count_history(30, 3, &[1.0, 10.0, 50.0], 0.2, 0.1, 0.0, SectorOptions::default()).unwrap();
        for traces in h {
            assert!((traces[0] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_order_vs_exact_blocks() {
        let gamma = 1.0;
        for atoms in [100u64, 1000] {
            for n in 1..=4u64 {
                let s = 0.05;
                let rabi = (s * gamma * gamma / (16.0 * atoms as f64)).sqrt();
                let r = reduced_params(s, gamma, 0.0).unwrap();
                let tau = 1.5 * r.tau0;
                let tol = 1e-10;
                let exact = exact_count_statistics_with(
                    atoms,
                    n,
                    tau,
                    rabi,
                    0.0,
                    gamma,
                    SectorOptions { tolerance: tol, expansion: Expansion::Exact },
                )
                .unwrap();
                let zero = exact_count_statistics_with(
                    atoms,
                    n,
                    tau,
                    rabi,
                    0.0,
                    gamma,
                    SectorOptions { tolerance: tol, expansion: Expansion::ZeroOrder },
                )
                .unwrap();
                let tv = total_variation(exact.probabilities(), zero.probabilities());
                assert!(tv <= n as f64 / atoms as f64 + 1e-8, "A={atoms} n={n}: {tv}");
            }
        }
    }

    #[test]
    fn no_jump_amplitude_matches_closed_form() {
        // √γ |⟨n−1| e^{−iH₀t} |n⟩| is the modulus of the transition amplitude
        let (atoms, n, gamma) = (200u64, 3u64, 2.0);
        let amp =
            AmplitudeParams::new(atoms, n, (0.1 * gamma * gamma / (16.0 * m_factor(atoms, n))).sqrt(), gamma).unwrap();
        let h = build_heff_zero_order(atoms, n, amp.rabi, 0.0, gamma).unwrap().to_dense();
        let d = n as usize;
        for t in [0.3, 2.0, 10.0] {
            let u = (h.clone() * C64::new(0.0, -t)).exp();
            let from_sector = gamma.sqrt() * u[(d - 1, d)].norm();
            assert_relative_eq!(from_sector, amp.psi_exact(t).unwrap().norm(), max_relative = 1e-9);
        }
    }

    #[test]
    fn close_to_closed_form_at_low_saturation() {
        let (atoms, n, gamma) = (200u64, 3u64, 1.0);
        let s = 0.01;
        let rabi = (s * gamma * gamma / (16.0 * atoms as f64)).sqrt();
        let r = reduced_params(s, gamma, 0.0).unwrap();
        for p in [0.6f64, 0.9] {
            let tau = -r.tau0 * (-p).ln_1p();
            let exact = exact_count_statistics(atoms, n, tau, rabi, 0.0, gamma, 1e-10).unwrap();
            let closed = count_distribution(r.q, p, n as usize).unwrap();
            let tv = total_variation(exact.probabilities(), closed.probabilities());
            assert!(tv <= 0.01, "p={p}: {tv}");
            assert_relative_eq!(exact.p(), p, max_relative = 1e-12);
        }
    }

    /// Generator of the stacked blocks on row-major vectorized densities,
    /// written out from the matrix elements rather than through the solver.
    fn liouvillian(atoms: u64, n: usize, rabi: f64, gamma: f64) -> (DMatrix<C64>, Vec<usize>, Vec<usize>) {
        let dims: Vec<usize> = (0..=n).map(|a| n - a + 1).collect();
        let offsets: Vec<usize> = dims
            .iter()
            .scan(0, |acc, d| {
                let o = *acc;
                *acc += d * d;
                Some(o)
            })
            .collect();
        let size = dims.iter().map(|d| d * d).sum();
        let mut l = DMatrix::<C64>::zeros(size, size);
        for a in 0..=n {
            let (d, nn, aa) = (dims[a], n - a, (atoms - a as u64) as f64);
            let mut h = DMatrix::<C64>::zeros(d, d);
            for m in 0..d {
                h[(m, m)] = C64::new(0.0, -gamma * (nn - m) as f64 / 2.0);
                if m > 0 {
                    let c = -rabi * ((nn - m + 1) as f64 * (aa - nn as f64 + m as f64) * m as f64).sqrt();
                    h[(m, m - 1)] = C64::new(c, 0.0);
                    h[(m - 1, m)] = C64::new(c, 0.0);
                }
            }
            for i in 0..d {
                for j in 0..d {
                    let row = offsets[a] + i * d + j;
                    for k in 0..d {
                        l[(row, offsets[a] + k * d + j)] += C64::new(0.0, -1.0) * h[(i, k)];
                        l[(row, offsets[a] + i * d + k)] += C64::new(0.0, 1.0) * h[(j, k)].conj();
                    }
                    if a > 0 {
                        let (prev, dp) = (nn + 1, dims[a - 1]);
                        let e = ((prev - i) as f64 * (prev - j) as f64).sqrt();
                        l[(row, offsets[a - 1] + i * dp + j)] += C64::new(gamma * e, 0.0);
                    }
                }
            }
        }
        (l, dims, offsets)
    }

    #[test]
    fn matches_liouvillian_exponential() {
        let (atoms, gamma) = (200u64, 1.0);
        for s in [0.02, 0.18] {
            let rabi = (s * gamma * gamma / (16.0 * atoms as f64)).sqrt();
            for n in 1..=3usize {
                let (l, dims, offsets) = liouvillian(atoms, n, rabi, gamma);
                let tau = 150.0;
                let mut rho0 = nalgebra::DVector::<C64>::zeros(l.nrows());
                rho0[n * (n + 1) + n] = C64::new(1.0, 0.0);
                let v = (l * C64::new(tau, 0.0)).exp() * rho0;
                let exact = exact_count_statistics(atoms, n as u64, tau, rabi, 0.0, gamma, 1e-10).unwrap();
                for a in 0..=n {
                    let trace: f64 = (0..dims[a]).map(|i| v[offsets[a] + i * dims[a] + i].re).sum();
                    assert!((trace - exact.get(a)).abs() < 1e-9, "S={s} n={n} a={a}: {trace} vs {}", exact.get(a));
                }
            }
        }
    }
}

//! Transient law of the pure-birth stage chain.
//!
//! Stage `s = L·k + j` (`L` stages per escape level, `L = 3` for finite `q`
//! and `1` at `q = ∞`) moves to `s + 1` at rate `r_s = n − k + j q`, in units
//! of `1/τ₀`. Stage `L·n` is absorbing. Starting in stage 0, `P_a` is the
//! mass in stages `L·a .. L·a + L − 1` at time `T = −ln(1 − p)`.
//!
//! Two propagators are implemented:
//!
//! * uniformization of the state vector, with Poisson weights evaluated in
//!   log space over chunks of at most [`MAX_CHUNK_EVENTS`] expected jumps;
//!   its cost grows linearly with `(n + 2q)·T`;
//! * scaling and squaring of `D = exp(Q h) − I`, whose cost is independent
//!   of `q`. Keeping the increment `D` rather than `exp(Q h)` itself keeps
//!   column sums at zero to working precision, so the total probability does
//!   not drift over tens of doublings.

use crate::counting::{check_inputs, stage_rates, CountDistribution, Method};
use crate::error::{Error, Result};

pub const MAX_CHUNK_EVENTS: f64 = 256.0;

/// Poisson weights below this are dropped once past the mode.
const POISSON_CUTOFF: f64 = 1e-20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Propagator {
    /// Picks the cheaper of the two by operation count.
    Auto,
    Uniformization,
    ScalingSquaring,
}

/// Rates `r_s` of the transient stages.
pub(crate) fn chain_rates(n: usize, q: f64) -> Vec<f64> {
    (0..n).flat_map(|k| stage_rates(k, n, q)).collect()
}

fn stages_per_level(q: f64) -> usize {
    if q.is_infinite() {
        1
    } else {
        3
    }
}

pub fn count_distribution_markov(q: f64, p: f64, n: usize, propagator: Propagator) -> Result<CountDistribution> {
    check_inputs(q, p)?;
    let mut probabilities = vec![0.0; n + 1];
    if n == 0 || p == 0.0 {
        probabilities[0] = 1.0;
    } else if p == 1.0 {
        probabilities[n] = 1.0;
    } else {
        let t = -(-p).ln_1p();
        let rates = chain_rates(n, q);
        let choice = match propagator {
            Propagator::Auto => cheaper(&rates, t),
            other => other,
        };
        let state = match choice {
            Propagator::ScalingSquaring => scaling_squaring(&rates, t),
            _ => uniformization(&rates, t),
        };
        let per_level = stages_per_level(q);
        for (a, slot) in probabilities.iter_mut().enumerate() {
            let lo = per_level * a;
            let hi = (lo + per_level).min(state.len());
            *slot = state[lo..hi].iter().sum();
        }
    }
    if probabilities.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("q", "stage chain propagation produced a non-finite value"));
    }
    CountDistribution::new(probabilities, q, p, Method::Markov)
}

fn cheaper(rates: &[f64], t: f64) -> Propagator {
    let m = (rates.len() + 1) as f64;
    let lambda = rates.iter().cloned().fold(0.0, f64::max);
    let events = lambda * t;
    let chunks = (events / MAX_CHUNK_EVENTS).ceil().max(1.0);
    let unif = 2.0 * m * (events + chunks * 8.0 * MAX_CHUNK_EVENTS.sqrt());
    let doublings = squarings(lambda, t) as f64;
    let squaring = m * m * m / 6.0 * (doublings + 20.0);
    if squaring < unif {
        Propagator::ScalingSquaring
    } else {
        Propagator::Uniformization
    }
}

/// Number of doublings so that the base step satisfies `Λ h ≤ 1/2`.
fn squarings(lambda: f64, t: f64) -> u32 {
    let x = 2.0 * lambda * t;
    if x <= 1.0 {
        0
    } else {
        x.log2().ceil() as u32
    }
}

/// State vector at time `t`, including the absorbing stage as last entry.
pub(crate) fn uniformization(rates: &[f64], t: f64) -> Vec<f64> {
    let m = rates.len() + 1;
    let mut x = vec![0.0; m];
    x[0] = 1.0;
    let lambda = rates.iter().cloned().fold(0.0, f64::max);
    if lambda == 0.0 || t == 0.0 {
        return x;
    }
    let stay: Vec<f64> = rates.iter().map(|&r| (lambda - r) / lambda).collect();
    let go: Vec<f64> = rates.iter().map(|&r| r / lambda).collect();

    let total = lambda * t;
    let chunks = (total / MAX_CHUNK_EVENTS).ceil().max(1.0) as usize;
    let weights = poisson_weights(total / chunks as f64);
    let mut term = vec![0.0; m];
    let mut next = vec![0.0; m];
    for _ in 0..chunks {
        term.copy_from_slice(&x);
        x.iter_mut().for_each(|v| *v = 0.0);
        for (k, &weight) in weights.iter().enumerate() {
            if k > 0 {
                // term <- P term
                next[0] = stay[0] * term[0];
                for s in 1..m - 1 {
                    next[s] = stay[s] * term[s] + go[s - 1] * term[s - 1];
                }
                next[m - 1] = term[m - 1] + go[m - 2] * term[m - 2];
                std::mem::swap(&mut term, &mut next);
            }
            for (xi, ti) in x.iter_mut().zip(&term) {
                *xi += weight * ti;
            }
        }
    }
    x
}

/// Poisson(μ) probabilities up to the point where they drop below
/// [`POISSON_CUTOFF`] past the mode, rescaled to sum to one. The rescaling
/// removes the rounding bias of the log-space evaluation, which would
/// otherwise accumulate over chunks.
fn poisson_weights(mu: f64) -> Vec<f64> {
    let ln_mu = mu.ln();
    let mut weights = Vec::new();
    let mut ln_fact = 0.0;
    let mut k = 0usize;
    loop {
        let w = (-mu + k as f64 * ln_mu - ln_fact).exp();
        weights.push(w);
        if k as f64 > mu && w < POISSON_CUTOFF {
            break;
        }
        k += 1;
        ln_fact += (k as f64).ln();
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    weights
}

/// Lower-triangular dense matrix, row-major.
struct Lower {
    m: usize,
    data: Vec<f64>,
}

impl Lower {
    fn zeros(m: usize) -> Self {
        Lower { m, data: vec![0.0; m * m] }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.m + j]
    }

    #[inline]
    fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.data[i * self.m + j]
    }
}

/// State vector at time `t` from `exp(Q t) e₀ = e₀ + D_s e₀`.
pub(crate) fn scaling_squaring(rates: &[f64], t: f64) -> Vec<f64> {
    let m = rates.len() + 1;
    let lambda = rates.iter().cloned().fold(0.0, f64::max);
    let s = squarings(lambda, t);
    let h = t / 2f64.powi(s as i32);

    // A = Q h, lower bidiagonal: A[i][i] = −r_i h, A[i+1][i] = r_i h.
    let diag: Vec<f64> = (0..m).map(|i| if i < rates.len() { -rates[i] * h } else { 0.0 }).collect();
    let sub: Vec<f64> = rates.iter().map(|&r| r * h).collect();

    // D = Σ_{k≥1} A^k / k!
    let mut d = Lower::zeros(m);
    let mut term = Lower::zeros(m);
    for i in 0..m {
        *term.at_mut(i, i) = diag[i];
        if i > 0 {
            *term.at_mut(i, i - 1) = sub[i - 1];
        }
    }
    let mut scratch = Lower::zeros(m);
    for k in 1..60 {
        let mut largest = 0.0f64;
        for (dv, tv) in d.data.iter_mut().zip(&term.data) {
            *dv += tv;
            largest = largest.max(tv.abs());
        }
        if largest < 1e-18 {
            break;
        }
        // term <- A term / (k + 1)
        let scale = 1.0 / (k + 1) as f64;
        for i in 0..m {
            for j in 0..=i {
                let mut v = diag[i] * term.at(i, j);
                if i > 0 && j < i {
                    v += sub[i - 1] * term.at(i - 1, j);
                }
                *scratch.at_mut(i, j) = v * scale;
            }
        }
        std::mem::swap(&mut term, &mut scratch);
    }

    // D <- 2D + D²
    for _ in 0..s {
        for i in 0..m {
            for j in 0..=i {
                let mut acc = 0.0;
                for k in j..=i {
                    acc += d.at(i, k) * d.at(k, j);
                }
                *scratch.at_mut(i, j) = 2.0 * d.at(i, j) + acc;
            }
        }
        std::mem::swap(&mut d, &mut scratch);
    }

    let mut x: Vec<f64> = (0..m).map(|i| d.at(i, 0).max(0.0)).collect();
    x[0] = (1.0 + d.at(0, 0)).max(0.0);
    x
}

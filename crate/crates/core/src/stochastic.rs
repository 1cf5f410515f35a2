//! Monte Carlo sampling of escape trajectories.
//!
//! Each shot draws escape delays from the hypoexponential waiting-time law
//! until the accumulated time exceeds the counting window or all `n`
//! excitations have escaped. Shot `i` uses its own ChaCha stream `i` under
//! the run seed, so histograms are identical for any thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::counting::{check_inputs, stage_rates, CountDistribution, Method};
use crate::error::{ensure_positive, ensure_shape, Error, Result};

/// A seeded random stream; `(seed, stream)` fixes every draw.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        RngStream { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Number of 32-bit words consumed so far.
    pub fn position(&self) -> u128 {
        self.rng.get_word_pos()
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random()
    }

    /// Exponential with the given rate, by inversion.
    pub fn exponential(&mut self, rate: f64) -> f64 {
        -(-self.uniform()).ln_1p() / rate
    }
}

/// Escape times of one shot, strictly increasing and within the window.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySample {
    pub times: Vec<f64>,
}

impl TrajectorySample {
    pub fn count(&self) -> usize {
        self.times.len()
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

fn draw_delay(k: usize, n: usize, q: f64, tau0: f64, rng: &mut RngStream) -> f64 {
    stage_rates(k, n, q).into_iter().map(|r| rng.exponential(r / tau0)).sum()
}

/// Delay between escape `k` and `k + 1`: a sum of exponential draws with
/// rates `(n − k + j q)/τ₀`, a single draw when `q = ∞`.
pub fn sample_waiting_time(k: usize, n: usize, q: f64, tau0: f64, rng: &mut RngStream) -> Result<f64> {
    check_level(k, n, q, tau0)?;
    Ok(draw_delay(k, n, q, tau0, rng))
}

/// Same law as [`sample_waiting_time`], drawn by rejection from the
/// density `∝ e^{−λ₀t}(1 − e^{−q t/τ₀})²` with an `Exp(λ₀)` proposal.
pub fn sample_waiting_time_rejection(k: usize, n: usize, q: f64, tau0: f64, rng: &mut RngStream) -> Result<f64> {
    check_level(k, n, q, tau0)?;
    let lambda0 = (n - k) as f64 / tau0;
    if q.is_infinite() {
        return Ok(rng.exponential(lambda0));
    }
    let d = q / tau0;
    loop {
        let t = rng.exponential(lambda0);
        let accept = (-(-d * t).exp_m1()).powi(2);
        if rng.uniform() < accept {
            return Ok(t);
        }
    }
}

/// One shot of the escape process over a window of length `tau`
/// (`f64::INFINITY` allowed).
pub fn simulate_trajectory(n: usize, q: f64, tau0: f64, tau: f64, rng: &mut RngStream) -> Result<TrajectorySample> {
    ensure_shape(q)?;
    ensure_positive("tau0", tau0)?;
    if tau.is_nan() || tau < 0.0 {
        return Err(Error::invalid("tau", format!("window must be >= 0, got {tau}")));
    }
    Ok(TrajectorySample { times: run_shot(n, q, tau0, tau, rng) })
}

fn run_shot(n: usize, q: f64, tau0: f64, tau: f64, rng: &mut RngStream) -> Vec<f64> {
    let mut times = Vec::new();
    let mut clock = 0.0;
    for k in 0..n {
        clock += draw_delay(k, n, q, tau0, rng);
        if clock > tau {
            break;
        }
        times.push(clock);
    }
    times
}

fn count_shot(n: usize, q: f64, tau: f64, rng: &mut RngStream) -> usize {
    let mut clock = 0.0;
    for k in 0..n {
        clock += draw_delay(k, n, q, 1.0, rng);
        if clock > tau {
            return k;
        }
    }
    n
}

/// Empirical count histogram.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCounts {
    pub distribution: CountDistribution,
    pub counts: Vec<u64>,
    pub shots: u64,
    pub seed: u64,
}

impl EmpiricalCounts {
    /// Binomial standard error `sqrt(P̂(1 − P̂)/shots)` of each bin.
    pub fn standard_errors(&self) -> Vec<f64> {
        self.distribution.probabilities().iter().map(|&x| (x * (1.0 - x) / self.shots as f64).sqrt()).collect()
    }
}

/// Histogram of escape counts over `shots` independent shots with window
/// `τ = −τ₀ ln(1 − p)`.
pub fn simulate_counts(n: usize, q: f64, p: f64, shots: u64, seed: u64) -> Result<EmpiricalCounts> {
    check_inputs(q, p)?;
    if shots == 0 {
        return Err(Error::invalid("shots", "need at least one shot"));
    }
    let tau = if p == 1.0 { f64::INFINITY } else { -(-p).ln_1p() };
    let base = RngStream::new(seed, 0);
    let counts = (0..shots)
        .into_par_iter()
        .fold(
            || vec![0u64; n + 1],
            |mut hist, shot| {
                let mut rng = base.clone();
                rng.rng.set_stream(shot);
                rng.rng.set_word_pos(0);
                rng.stream = shot;
                hist[count_shot(n, q, tau, &mut rng)] += 1;
                hist
            },
        )
        .reduce(
            || vec![0u64; n + 1],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let probabilities = counts.iter().map(|&c| c as f64 / shots as f64).collect();
    Ok(EmpiricalCounts {
        distribution: CountDistribution::new(probabilities, q, p, Method::MonteCarlo)?,
        counts,
        shots,
        seed,
    })
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / x.len() as f64 - j as f64 / y.len() as f64).abs());
    }
    d
}

/// One-sample Kolmogorov–Smirnov statistic against a continuous CDF.
pub fn ks_one_sample(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut x = sample.to_vec();
    x.sort_by(f64::total_cmp);
    let len = x.len() as f64;
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / len).abs().max(((i + 1) as f64 / len - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic 1% critical value of the Kolmogorov distribution.
pub const KS_CRITICAL_1PCT: f64 = 1.628;

//! Atom-count statistics of a photodetector built from a Bose-condensed gas
//! held in a micro trap.
//!
//! The crate follows the chain from laboratory inputs to counting statistics:
//!
//! * [`params`] turns trap and light parameters into the escape rate, the
//!   saturation parameter and the reduced parameters `(q, τ₀, p)`;
//! * [`amplitudes`] evaluates the single-absorption transition amplitude and
//!   the renormalized atom waiting-time density;
//! * [`counting`] computes the conditional count distribution `P_a(q,p|n)`
//!   and the phenomenological quantum efficiency;
//! * [`sector`] and [`stochastic`] are independent oracles (exact sector
//!   propagation and Monte Carlo escape sampling);
//! * [`statistics`] mixes conditional statistics over photon distributions
//!   and compares against the binomial/Mandel reference.
//!
//! Unless noted otherwise, the shape parameter `q` accepts `f64::INFINITY`
//! as the low-saturation limit, in which the counting statistics is exactly
//! binomial.

pub mod amplitudes;
pub mod counting;
pub mod error;
pub mod laplace;
pub mod params;
mod quad;
pub mod sector;
pub mod statistics;
pub mod stochastic;

pub use counting::{count_distribution, efficiency, moments, CountDistribution, Method, Moments};
pub use error::{Error, Result};
pub use params::{DetectorParams, PhysicalConfig};

pub use num_complex::Complex64 as C64;

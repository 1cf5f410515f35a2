//! Detector-level statistics: mixing the conditional count distributions
//! over an input photon-number distribution, and comparison with the
//! Binomial (Mandel) counting model.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::counting::{binomial_pmf, count_distribution, moments_of, total_variation, CountDistribution, Method};
use crate::error::{ensure_probability, Error, Result};

/// Tail mass left out when truncating infinite photon distributions.
pub const TRUNCATION_TARGET: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum PhotonSource {
    Fock(usize),
    Coherent(f64),
    Thermal(f64),
    Custom,
}

/// Photon-number distribution `P_n`, `n = 0..=n_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotonStatistics {
    probabilities: Vec<f64>,
    source: PhotonSource,
    /// Upper bound on the probability mass beyond `n_max`.
    truncation: f64,
}

impl PhotonStatistics {
    pub fn fock(n: usize) -> Self {
        let mut probabilities = vec![0.0; n + 1];
        probabilities[n] = 1.0;
        PhotonStatistics { probabilities, source: PhotonSource::Fock(n), truncation: 0.0 }
    }

    pub fn vacuum() -> Self {
        Self::fock(0)
    }

    /// Poisson distribution, truncated where the remaining tail drops below
    /// [`TRUNCATION_TARGET`].
    pub fn coherent(mean: f64) -> Result<Self> {
        if !(mean >= 0.0 && mean.is_finite()) {
            return Err(Error::invalid("mean", format!("must be finite and >= 0, got {mean}")));
        }
        if mean == 0.0 {
            return Ok(PhotonStatistics { source: PhotonSource::Coherent(0.0), ..Self::vacuum() });
        }
        let ln_mean = mean.ln();
        let mut probabilities = Vec::new();
        let mut k = 0usize;
        loop {
            let pk = (-mean + k as f64 * ln_mean - ln_gamma(k as f64 + 1.0)).exp();
            probabilities.push(pk);
            // past the mode the tail is bounded by a geometric series
            let ratio = mean / (k as f64 + 2.0);
            if ratio < 1.0 {
                let tail = pk * ratio / (1.0 - ratio);
                if tail < TRUNCATION_TARGET {
                    return Ok(PhotonStatistics {
                        probabilities,
                        source: PhotonSource::Coherent(mean),
                        truncation: tail,
                    });
                }
            }
            k += 1;
        }
    }

    /// Bose–Einstein distribution `μ^n/(1+μ)^{n+1}`, truncated where the
    /// tail `(μ/(1+μ))^{n_max+1}` drops below [`TRUNCATION_TARGET`].
    pub fn thermal(mean: f64) -> Result<Self> {
        if !(mean >= 0.0 && mean.is_finite()) {
            return Err(Error::invalid("mean", format!("must be finite and >= 0, got {mean}")));
        }
        if mean == 0.0 {
            return Ok(PhotonStatistics { source: PhotonSource::Thermal(0.0), ..Self::vacuum() });
        }
        let ratio = mean / (1.0 + mean);
        let n_max = (TRUNCATION_TARGET.ln() / ratio.ln()).ceil() as usize;
        let probabilities = (0..=n_max).map(|n| ratio.powi(n as i32) / (1.0 + mean)).collect();
        Ok(PhotonStatistics {
            probabilities,
            source: PhotonSource::Thermal(mean),
            truncation: ratio.powi(n_max as i32 + 1),
        })
    }

    /// Arbitrary distribution; must be nonnegative and sum to one within
    /// [`TRUNCATION_TARGET`].
    pub fn custom(probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.is_empty() || probabilities.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::invalid("probabilities", "need a nonempty vector of finite, nonnegative entries"));
        }
        let missing = 1.0 - probabilities.iter().sum::<f64>();
        if missing.abs() > TRUNCATION_TARGET {
            return Err(Error::invalid("probabilities", format!("sum differs from 1 by {missing:e}")));
        }
        Ok(PhotonStatistics { probabilities, source: PhotonSource::Custom, truncation: missing.max(0.0) })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn n_max(&self) -> usize {
        self.probabilities.len() - 1
    }

    pub fn source(&self) -> PhotonSource {
        self.source
    }

    pub fn truncation(&self) -> f64 {
        self.truncation
    }

    pub fn mean(&self) -> f64 {
        moments_of(&self.probabilities).mean
    }
}

/// Conditional count distributions `P(a | n)` for `n = 0..=n_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorResponse {
    q: f64,
    p: f64,
    rows: Vec<CountDistribution>,
}

impl DetectorResponse {
    pub fn new(q: f64, p: f64, n_max: usize) -> Result<Self> {
        let rows = (0..=n_max).into_par_iter().map(|n| count_distribution(q, p, n)).collect::<Result<Vec<_>>>()?;
        Ok(DetectorResponse { q, p, rows })
    }

    /// Binomial response with efficiency `eta`: the Mandel model.
    pub fn binomial(eta: f64, n_max: usize) -> Result<Self> {
        ensure_probability("eta", eta)?;
        let rows = (0..=n_max)
            .map(|n| CountDistribution::new(binomial_pmf(n, eta), f64::INFINITY, eta, Method::Binomial))
            .collect::<Result<Vec<_>>>()?;
        Ok(DetectorResponse { q: f64::INFINITY, p: eta, rows })
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn n_max(&self) -> usize {
        self.rows.len() - 1
    }

    pub fn row(&self, n: usize) -> Option<&CountDistribution> {
        self.rows.get(n)
    }
}

/// Mixed count distribution with the truncation bound inherited from the
/// photon statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedCounts {
    pub probabilities: Vec<f64>,
    pub truncation: f64,
}

/// `P_a = Σ_n P(a | n) P_n`.
pub fn mix(photons: &PhotonStatistics, response: &DetectorResponse) -> Result<MixedCounts> {
    if photons.n_max() > response.n_max() {
        return Err(Error::Coverage { required: photons.n_max(), available: response.n_max() });
    }
    let mut probabilities = vec![0.0; photons.n_max() + 1];
    for (n, &pn) in photons.probabilities().iter().enumerate() {
        if pn == 0.0 {
            continue;
        }
        for (a, &pa) in response.rows[n].probabilities().iter().enumerate() {
            probabilities[a] += pa * pn;
        }
    }
    Ok(MixedCounts { probabilities, truncation: photons.truncation() })
}

pub fn binomial_reference(eta: f64, n: usize) -> Result<CountDistribution> {
    ensure_probability("eta", eta)?;
    CountDistribution::new(binomial_pmf(n, eta), f64::INFINITY, eta, Method::Binomial)
}

/// Mandel counting statistics for a number-diagonal input.
pub fn mandel_counts(photons: &PhotonStatistics, eta: f64) -> Result<MixedCounts> {
    mix(photons, &DetectorResponse::binomial(eta, photons.n_max())?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    /// `dist_a − ref_a`, padded to the longer support.
    pub differences: Vec<f64>,
    pub total_variation: f64,
    /// `fano(dist) / fano(ref)`.
    pub fano_ratio: f64,
}

pub fn deviation(dist: &[f64], reference: &[f64]) -> Deviation {
    let len = dist.len().max(reference.len());
    let differences =
        (0..len).map(|a| dist.get(a).copied().unwrap_or(0.0) - reference.get(a).copied().unwrap_or(0.0)).collect();
    Deviation {
        differences,
        total_variation: total_variation(dist, reference),
        fano_ratio: moments_of(dist).fano / moments_of(reference).fano,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counting::efficiency;
    use approx::assert_relative_eq;

    fn poisson(mean: f64, len: usize) -> Vec<f64> {
        (0..len).map(|k| (-mean + k as f64 * mean.ln() - ln_gamma(k as f64 + 1.0)).exp()).collect()
    }

    #[test]
    fn photon_distributions_are_normalized() {
        for mean in [0.5, 5.0, 40.0, 900.0] {
            let c = PhotonStatistics::coherent(mean).unwrap();
            assert!((c.probabilities().iter().sum::<f64>() - 1.0).abs() <= 1e-12 + 1e-14);
            assert!(c.truncation() < TRUNCATION_TARGET);
            let t = PhotonStatistics::thermal(mean.min(50.0)).unwrap();
            assert!((t.probabilities().iter().sum::<f64>() - 1.0).abs() <= 1e-12 + 1e-14);
            assert_relative_eq!(t.mean(), mean.min(50.0), max_relative = 1e-9);
        }
        assert!(PhotonStatistics::custom(vec![0.5, 0.4]).is_err());
        assert!(PhotonStatistics::custom(vec![0.5, 0.5]).is_ok());
    }

    #[test]
    fn fock_and_vacuum_inputs() {
        let response = DetectorResponse::new(10.0, 0.9, 10).unwrap();
        let m = mix(&PhotonStatistics::fock(10), &response).unwrap();
        assert_eq!(m.probabilities, response.row(10).unwrap().probabilities());
        let m = mix(&PhotonStatistics::vacuum(), &response).unwrap();
        assert_eq!(m.probabilities, vec![1.0]);
        let short = DetectorResponse::new(10.0, 0.9, 3).unwrap();
        assert!(matches!(mix(&PhotonStatistics::fock(5), &short), Err(Error::Coverage { required: 5, available: 3 })));
    }

    #[test]
    fn thinned_coherent_light_is_poisson() {
        let p = 0.7;
        let photons = PhotonStatistics::coherent(5.0).unwrap();
        let response = DetectorResponse::new(f64::INFINITY, p, photons.n_max()).unwrap();
        let m = mix(&photons, &response).unwrap();
        for (got, want) in m.probabilities.iter().zip(poisson(5.0 * p, m.probabilities.len())) {
            assert!((got - want).abs() < 1e-10);
        }
    }

    #[test]
    fn infinite_q_mix_equals_mandel() {
        for photons in [
            PhotonStatistics::coherent(3.0).unwrap(),
            PhotonStatistics::thermal(2.0).unwrap(),
            PhotonStatistics::fock(7),
        ] {
            let response = DetectorResponse::new(f64::INFINITY, 0.6, photons.n_max()).unwrap();
            assert_eq!(mix(&photons, &response).unwrap(), mandel_counts(&photons, 0.6).unwrap());
        }
    }

    #[test]
    fn mandel_identities() {
        let eta = 0.35;
        let m = mandel_counts(&PhotonStatistics::coherent(4.0).unwrap(), eta).unwrap();
        for (got, want) in m.probabilities.iter().zip(poisson(4.0 * eta, m.probabilities.len())) {
            assert!((got - want).abs() < 1e-10);
        }
        // geometric thinning keeps thermal statistics
        let mu = 3.0;
        let m = mandel_counts(&PhotonStatistics::thermal(mu).unwrap(), eta).unwrap();
        let nu = eta * mu;
        for (a, got) in m.probabilities.iter().enumerate() {
            let want = nu.powi(a as i32) / (1.0 + nu).powi(a as i32 + 1);
            assert!((got - want).abs() < 1e-10, "a={a}");
        }
        let m = mandel_counts(&PhotonStatistics::fock(6), eta).unwrap();
        assert_eq!(m.probabilities, binomial_pmf(6, eta));
    }

    #[test]
    fn binomial_reference_edges() {
        assert_eq!(binomial_reference(0.0, 3).unwrap().probabilities(), &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(binomial_reference(1.0, 3).unwrap().probabilities(), &[0.0, 0.0, 0.0, 1.0]);
        assert!(binomial_reference(1.2, 3).is_err());
    }

    #[test]
    fn deviation_properties() {
        let x = binomial_pmf(5, 0.3);
        let d = deviation(&x, &x);
        assert!(d.differences.iter().all(|&v| v == 0.0));
        assert_eq!(d.total_variation, 0.0);
        assert_eq!(d.fano_ratio, 1.0);
        assert_eq!(deviation(&[1.0], &[0.5, 0.5]).differences, vec![0.5, -0.5]);
    }

    #[test]
    fn narrowing_and_trend_versus_binomial() {
        let versus = |q: f64, p: f64| {
            let d = count_distribution(q, p, 10).unwrap();
            let eta = efficiency(q, p, 10).unwrap();
            deviation(d.probabilities(), binomial_reference(eta, 10).unwrap().probabilities())
        };
        assert!(versus(10.0, 0.9).fano_ratio < 1.0);
        assert!(versus(100.0, 0.9).total_variation < versus(10.0, 0.9).total_variation);
        for p in [0.6, 0.9] {
            let tvs: Vec<f64> =
                [10.0, 30.0, 100.0, 300.0, 1000.0].iter().map(|&q| versus(q, p).total_variation).collect();
            assert!(tvs.windows(2).all(|w| w[1] < w[0]), "p={p}: {tvs:?}");
        }
    }
}

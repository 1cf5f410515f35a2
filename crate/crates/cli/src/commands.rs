use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::Deserialize;
use serde_json::{json, Value};

use atomcount::counting::partial_fraction::count_distribution_partial_fraction;
use atomcount::counting::{binomial_pmf, total_variation};
use atomcount::params::{
    derive_trap_scales, escape_time_scale, integration_time, reduced_params, resonance_wavenumber, saturation,
    shape_from_saturation, PhysicalConfig,
};
use atomcount::sector::exact_count_statistics;
use atomcount::statistics::{mandel_counts, mix, DetectorResponse, PhotonStatistics};
use atomcount::stochastic::simulate_counts;
use atomcount::{count_distribution, Error};

use crate::args::{CountsArgs, EfficiencyArgs, ExactArgs, McArgs, MixArgs, ParamsArgs, Source};
use crate::output::{num, Body, Table};

/// Bad or missing input that clap could not catch.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Result of one subcommand before it is written out.
#[derive(Debug)]
pub struct Run {
    pub body: Body,
    pub params: Value,
    pub seed: Option<u64>,
    /// Cross-checks that exceeded their tolerance.
    pub disagreements: Vec<String>,
}

fn finite_or_null(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialConfig {
    atom_mass: Option<f64>,
    trap_frequency: Option<f64>,
    photon_wavenumber: Option<f64>,
    rabi_frequency: Option<f64>,
    detuning: Option<f64>,
    atom_number: Option<u64>,
    transition_frequency: Option<f64>,
}

fn physical_config(args: &ParamsArgs) -> Result<PhysicalConfig> {
    let file = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str::<PartialConfig>(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
        }
        None => PartialConfig::default(),
    };
    let need = |name: &str, flag: Option<f64>, file: Option<f64>| {
        flag.or(file).ok_or_else(|| usage(format!("missing --{} (flag or config key {name})", name.replace('_', "-"))))
    };
    Ok(PhysicalConfig {
        atom_mass: need("atom_mass", args.atom_mass, file.atom_mass)?,
        trap_frequency: need("trap_frequency", args.trap_frequency, file.trap_frequency)?,
        photon_wavenumber: need("photon_wavenumber", args.photon_wavenumber, file.photon_wavenumber)?,
        rabi_frequency: need("rabi_frequency", args.rabi_frequency, file.rabi_frequency)?,
        detuning: args.detuning.or(file.detuning).unwrap_or(0.0),
        atom_number: args
            .atom_number
            .or(file.atom_number)
            .ok_or_else(|| usage("missing --atom-number (flag or config key atom_number)"))?,
        transition_frequency: args.transition_frequency.or(file.transition_frequency),
    })
}

pub fn params(args: &ParamsArgs) -> Result<Run> {
    let cfg = physical_config(args)?;
    cfg.validate()?;
    if !(args.tau >= 0.0 && args.tau.is_finite()) {
        return Err(usage(format!("--tau must be finite and >= 0, got {}", args.tau)));
    }
    let scales = derive_trap_scales(&cfg)?;
    let s = saturation(cfg.atom_number, 1, cfg.rabi_frequency, scales.escape_rate, cfg.detuning)?;
    let (regime, q, tau0, p) = if s < 1.0 {
        let r = reduced_params(s, scales.escape_rate, args.tau)?;
        ("over-damped", finite_or_null(r.q), json!(r.tau0), json!(r.p))
    } else {
        eprintln!(
            "warning: S = {s:.6} >= 1, outside the over-damped regime; q, tau0 and escape_probability are undefined"
        );
        ("rabi", Value::Null, Value::Null, Value::Null)
    };
    let resonance = match cfg.transition_frequency {
        Some(_) => json!(resonance_wavenumber(&cfg)?),
        None => Value::Null,
    };
    let body = json!({
        "ground_spread": scales.ground_spread,
        "lamb_dicke": scales.lamb_dicke,
        "group_velocity": scales.group_velocity,
        "escape_rate": scales.escape_rate,
        "escape_rate_large_eta": scales.escape_rate_large_eta(),
        "saturation": s,
        "regime": regime,
        "q": q,
        "tau0": tau0,
        "escape_probability": p,
        "resonance_wavenumber": resonance,
    });
    Ok(Run {
        body: Body::Json(body),
        params: json!({ "config": cfg, "tau": args.tau }),
        seed: None,
        disagreements: Vec::new(),
    })
}

pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..points)
        .map(|i| match i {
            0 => lo,
            _ if i == points - 1 => hi,
            _ => (a + (b - a) * i as f64 / (points - 1) as f64).exp(),
        })
        .collect()
}

pub fn efficiency(args: &EfficiencyArgs) -> Result<Run> {
    if args.q_max.is_infinite() || args.q_min > args.q_max {
        return Err(usage("need finite --q-min <= --q-max"));
    }
    if args.grid == 0 || args.n.is_empty() {
        return Err(usage("--grid and --n must be non-empty"));
    }
    if args.n.contains(&0) {
        return Err(usage("efficiency needs n >= 1"));
    }
    let grid = log_grid(args.q_min, args.q_max, args.grid);
    let cells: Vec<(f64, usize)> = grid.iter().flat_map(|&q| args.n.iter().map(move |&n| (q, n))).collect();
    let etas =
        cells.par_iter().map(|&(q, n)| atomcount::efficiency(q, args.p, n)).collect::<atomcount::Result<Vec<f64>>>()?;
    let mut table = Table::new(vec!["q", "n", "eta_D", "eta_D_over_p"]);
    for (&(q, n), eta) in cells.iter().zip(etas) {
        let ratio = if args.p > 0.0 { eta / args.p } else { f64::NAN };
        table.push(vec![num(q), n.to_string(), num(eta), num(ratio)]);
    }
    Ok(Run {
        body: Body::Csv(table),
        params: json!({
            "p": args.p, "n": args.n, "q_min": args.q_min, "q_max": args.q_max, "grid": args.grid,
        }),
        seed: None,
        disagreements: Vec::new(),
    })
}

/// Standard error of a Monte Carlo bin with true probability `p`.
fn bin_sigma(p: f64, shots: u64) -> f64 {
    (p * (1.0 - p) / shots as f64).sqrt()
}

fn mc_disagreement(closed: &[f64], empirical: &[f64], shots: u64) -> Option<String> {
    let mut worst = (0usize, 0.0f64);
    for (a, (&pc, &pe)) in closed.iter().zip(empirical).enumerate() {
        let sigma = bin_sigma(pc, shots);
        let diff = (pe - pc).abs();
        let z = if sigma > 0.0 {
            diff / sigma
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        if z > worst.1 {
            worst = (a, z);
        }
    }
    (worst.1 > 4.0)
        .then(|| format!("Monte Carlo bin a={} is {:.2} standard errors from the closed form", worst.0, worst.1))
}

pub fn counts(args: &CountsArgs) -> Result<Run> {
    let n = args.n;
    let mut disagreements = Vec::new();
    let mut params = json!({ "p": args.p, "n": n });

    let exact_setup = if args.exact {
        let (atoms, rabi, gamma) = (args.atoms.unwrap(), args.rabi.unwrap(), args.gamma.unwrap());
        let s = saturation(atoms, 1, rabi, gamma, args.detuning)?;
        if s >= 1.0 {
            return Err(Error::Regime { saturation: s }.into());
        }
        let q = shape_from_saturation(s)?;
        let tau = integration_time(args.p, escape_time_scale(s, gamma)?);
        params["exact"] = json!({
            "atoms": atoms, "rabi": rabi, "gamma": gamma, "detuning": args.detuning,
            "saturation": s, "tau": finite_or_null(tau), "solver_tol": args.solver_tol,
        });
        Some((atoms, rabi, gamma, q, tau))
    } else {
        None
    };

    let q = match (args.q, exact_setup) {
        (Some(q), Some((.., q_exact, _))) if (q - q_exact).abs() > 1e-9 * q_exact => {
            return Err(usage(format!("--q {q} contradicts q = {q_exact} implied by the --exact rates")));
        }
        (Some(q), _) => q,
        (None, Some((.., q_exact, _))) => q_exact,
        (None, None) => return Err(usage("--q is required unless --exact is given")),
    };
    params["q"] = finite_or_null(q);

    let closed = count_distribution(q, args.p, n)?;
    let eta = if n == 0 { args.p } else { closed.mean() / n as f64 };
    params["eta_D"] = json!(eta);
    let binomial = binomial_pmf(n, eta);

    let mc = if args.mc {
        params["shots"] = json!(args.shots);
        Some(simulate_counts(n, q, args.p, args.shots, args.seed)?)
    } else {
        None
    };
    let exact = match exact_setup {
        Some((atoms, rabi, gamma, _, tau)) => {
            if tau.is_infinite() {
                return Err(usage("--exact needs p < 1"));
            }
            Some(exact_count_statistics(atoms, n as u64, tau, rabi, args.detuning, gamma, args.solver_tol)?)
        }
        None => None,
    };

    if args.check {
        if q.is_finite() && args.p < 1.0 {
            let pf = count_distribution_partial_fraction(q, args.p, n)?;
            let tv = total_variation(closed.probabilities(), pf.distribution.probabilities());
            params["check"] = json!({ "route_tv": tv, "lost_digits": pf.lost_digits });
            if tv > 1e-8 {
                disagreements.push(format!("Markov and partial-fraction routes differ by TV {tv:.3e}"));
            }
        }
        if let Some(mc) = &mc {
            disagreements.extend(mc_disagreement(closed.probabilities(), mc.distribution.probabilities(), mc.shots));
        }
        if let (Some(exact), Some((atoms, ..))) = (&exact, exact_setup) {
            let tv = total_variation(closed.probabilities(), exact.probabilities());
            let tol = 0.01 + n as f64 / atoms as f64;
            if tv > tol {
                disagreements.push(format!("sector solver differs from the closed form by TV {tv:.3e} > {tol:.3e}"));
            }
        }
    }

    let mut header = vec!["a", "P_closed"];
    if mc.is_some() {
        header.extend(["P_mc", "mc_stderr"]);
    }
    if exact.is_some() {
        header.push("P_exact");
    }
    header.extend(["P_binomial", "deviation"]);
    let mut table = Table::new(header);
    let mc_err = mc.as_ref().map(|m| m.standard_errors());
    for a in 0..=n {
        let mut row = vec![a.to_string(), num(closed.get(a))];
        if let (Some(m), Some(err)) = (&mc, &mc_err) {
            row.extend([num(m.distribution.get(a)), num(err[a])]);
        }
        if let Some(e) = &exact {
            row.push(num(e.get(a)));
        }
        row.extend([num(binomial[a]), num(closed.get(a) - binomial[a])]);
        table.push(row);
    }
    Ok(Run { body: Body::Csv(table), params, seed: args.mc.then_some(args.seed), disagreements })
}

pub fn mix_counts(args: &MixArgs) -> Result<Run> {
    let photons = match args.source {
        Source::Vacuum => PhotonStatistics::vacuum(),
        Source::Fock => PhotonStatistics::fock(args.n.ok_or_else(|| usage("--source fock needs --n"))?),
        Source::Coherent => {
            PhotonStatistics::coherent(args.mean.ok_or_else(|| usage("--source coherent needs --mean"))?)?
        }
        Source::Thermal => PhotonStatistics::thermal(args.mean.ok_or_else(|| usage("--source thermal needs --mean"))?)?,
    };
    let response = DetectorResponse::new(args.q, args.p, photons.n_max())?;
    let mixed = mix(&photons, &response)?;
    let mean_count: f64 = mixed.probabilities.iter().enumerate().map(|(a, p)| a as f64 * p).sum();
    let eta = match args.eta {
        Some(eta) => eta,
        None if photons.mean() > 0.0 => (mean_count / photons.mean()).min(1.0),
        None => args.p,
    };
    let mandel = mandel_counts(&photons, eta)?;
    let mut table = Table::new(vec!["a", "P_a", "P_a_mandel", "deviation"]);
    for (a, (&pa, &pm)) in mixed.probabilities.iter().zip(&mandel.probabilities).enumerate() {
        table.push(vec![a.to_string(), num(pa), num(pm), num(pa - pm)]);
    }
    Ok(Run {
        body: Body::Csv(table),
        params: json!({
            "source": format!("{:?}", args.source).to_lowercase(),
            "mean": args.mean, "n": args.n, "q": finite_or_null(args.q), "p": args.p,
            "eta": eta, "n_max": photons.n_max(), "truncation": mixed.truncation,
        }),
        seed: None,
        disagreements: Vec::new(),
    })
}

pub fn exact(args: &ExactArgs) -> Result<Run> {
    let s = saturation(args.atoms, 1, args.rabi, args.gamma, args.detuning)?;
    let over_damped = s < 1.0;
    let tau = match (args.tau, args.p) {
        (Some(tau), _) => tau,
        (None, Some(p)) => {
            if !over_damped {
                return Err(Error::Regime { saturation: s }.into());
            }
            integration_time(p, escape_time_scale(s, args.gamma)?)
        }
        (None, None) => bail!(usage("one of --tau or --p is required")),
    };
    if !tau.is_finite() {
        return Err(usage("integration time must be finite (p < 1)"));
    }
    let dist = exact_count_statistics(args.atoms, args.n, tau, args.rabi, args.detuning, args.gamma, args.solver_tol)?;
    let closed = if over_damped {
        Some(count_distribution(dist.q(), dist.p(), args.n as usize)?)
    } else {
        eprintln!("warning: S_A = {s:.6} >= 1, no closed-form column");
        None
    };
    let mut header = vec!["a", "P_exact"];
    if closed.is_some() {
        header.extend(["P_closed", "deviation"]);
    }
    let mut table = Table::new(header);
    for a in 0..=args.n as usize {
        let mut row = vec![a.to_string(), num(dist.get(a))];
        if let Some(c) = &closed {
            row.extend([num(c.get(a)), num(dist.get(a) - c.get(a))]);
        }
        table.push(row);
    }
    Ok(Run {
        body: Body::Csv(table),
        params: json!({
            "atoms": args.atoms, "n": args.n, "rabi": args.rabi, "gamma": args.gamma, "detuning": args.detuning,
            "tau": tau, "saturation": s, "q": finite_or_null(dist.q()), "p": finite_or_null(dist.p()),
            "solver_tol": args.solver_tol,
        }),
        seed: None,
        disagreements: Vec::new(),
    })
}

pub fn monte_carlo(args: &McArgs) -> Result<Run> {
    let mc = simulate_counts(args.n, args.q, args.p, args.shots, args.seed)?;
    let closed = count_distribution(args.q, args.p, args.n)?;
    let mut disagreements = Vec::new();
    if args.check {
        disagreements.extend(mc_disagreement(closed.probabilities(), mc.distribution.probabilities(), args.shots));
    }
    let err = mc.standard_errors();
    let mut table = Table::new(vec!["a", "count", "P_mc", "mc_stderr", "P_closed"]);
    for (a, (count, stderr)) in mc.counts.iter().zip(&err).enumerate() {
        table.push(vec![
            a.to_string(),
            count.to_string(),
            num(mc.distribution.get(a)),
            num(*stderr),
            num(closed.get(a)),
        ]);
    }
    Ok(Run {
        body: Body::Csv(table),
        params: json!({ "q": finite_or_null(args.q), "p": args.p, "n": args.n, "shots": args.shots }),
        seed: Some(args.seed),
        disagreements,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_grid_hits_both_ends() {
        let g = log_grid(1.0, 1e6, 7);
        assert_eq!(g.len(), 7);
        assert_eq!(g[0], 1.0);
        assert_eq!(g[6], 1e6);
        assert!((g[3] - 1e3).abs() < 1e-9);
    }

    #[test]
    fn mc_check_flags_large_deviation() {
        assert!(mc_disagreement(&[0.5, 0.5], &[0.5, 0.5], 100).is_none());
        assert!(mc_disagreement(&[0.5, 0.5], &[0.7, 0.3], 10_000).is_some());
    }
}

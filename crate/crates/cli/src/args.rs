use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "atomcount", version, about = "Atom-count statistics of a condensate-based photodetector")]
pub struct Cli {
    /// Output file. Defaults to `<subcommand>.<ext>` in `ATOMCOUNT_OUT_DIR`
    /// when that is set, and to stdout otherwise.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Derived detector parameters from physical inputs, as JSON.
    Params(ParamsArgs),
    /// Efficiency η_D on a log-spaced q grid.
    Efficiency(EfficiencyArgs),
    /// Conditional count distribution P_a(q, p | n) with optional cross-checks.
    Counts(CountsArgs),
    /// Count distribution for a mixture of photon numbers.
    Mix(MixArgs),
    /// Exact sector-solver distribution for given physical rates.
    Exact(ExactArgs),
    /// Monte Carlo count histogram.
    Mc(McArgs),
    /// Recompute the output recorded in a manifest and compare checksums.
    Replay(ReplayArgs),
}

/// Accepts any float `f64` parses, including `inf`.
pub fn parse_q(s: &str) -> Result<f64, String> {
    let q: f64 = s.trim().parse().map_err(|_| format!("not a number: {s}"))?;
    if q.is_nan() || q <= 0.0 {
        return Err(format!("q must be > 0 or inf, got {s}"));
    }
    Ok(q)
}

fn parse_p(s: &str) -> Result<f64, String> {
    let p: f64 = s.trim().parse().map_err(|_| format!("not a number: {s}"))?;
    if !(0.0..=1.0).contains(&p) {
        return Err(format!("p must lie in [0, 1], got {s}"));
    }
    Ok(p)
}

#[derive(Debug, Args, Clone)]
pub struct ParamsArgs {
    /// TOML file with `PhysicalConfig` fields; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub atom_mass: Option<f64>,
    #[arg(long)]
    pub trap_frequency: Option<f64>,
    #[arg(long)]
    pub photon_wavenumber: Option<f64>,
    #[arg(long)]
    pub rabi_frequency: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub detuning: Option<f64>,
    #[arg(long)]
    pub atom_number: Option<u64>,
    #[arg(long)]
    pub transition_frequency: Option<f64>,
    /// Integration time τ (s).
    #[arg(long, default_value_t = 0.0)]
    pub tau: f64,
}

#[derive(Debug, Args, Clone)]
pub struct EfficiencyArgs {
    #[arg(long, value_parser = parse_p)]
    pub p: f64,
    /// Photon numbers, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 10, 20])]
    pub n: Vec<usize>,
    #[arg(long, default_value_t = 1.0, value_parser = parse_q)]
    pub q_min: f64,
    #[arg(long, default_value_t = 1e6, value_parser = parse_q)]
    pub q_max: f64,
    /// Number of q points, log spaced and including both ends.
    #[arg(long, default_value_t = 61)]
    pub grid: usize,
}

#[derive(Debug, Args, Clone)]
pub struct CountsArgs {
    /// Shape parameter; `inf` selects the Binomial limit. May be omitted
    /// with `--exact`, which then implies it.
    #[arg(long, value_parser = parse_q)]
    pub q: Option<f64>,
    #[arg(long, value_parser = parse_p)]
    pub p: f64,
    #[arg(long)]
    pub n: usize,
    /// Add a Monte Carlo column.
    #[arg(long)]
    pub mc: bool,
    #[arg(long, default_value_t = 1_000_000)]
    pub shots: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Add an exact sector-solver column; needs `--atoms`, `--rabi`, `--gamma`.
    #[arg(long, requires_all = ["atoms", "rabi", "gamma"])]
    pub exact: bool,
    #[arg(long)]
    pub atoms: Option<u64>,
    #[arg(long)]
    pub rabi: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub detuning: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub solver_tol: f64,
    /// Cross-check against independent routes and exit with status 4 if
    /// any disagrees beyond tolerance.
    #[arg(long)]
    pub check: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Source {
    Vacuum,
    Fock,
    Coherent,
    Thermal,
}

#[derive(Debug, Args, Clone)]
pub struct MixArgs {
    #[arg(long, value_enum)]
    pub source: Source,
    /// Mean photon number for coherent and thermal light.
    #[arg(long)]
    pub mean: Option<f64>,
    /// Photon number for Fock light.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_parser = parse_q)]
    pub q: f64,
    #[arg(long, value_parser = parse_p)]
    pub p: f64,
    /// Efficiency of the Mandel reference. Defaults to mean count over mean
    /// photon number.
    #[arg(long, value_parser = parse_p)]
    pub eta: Option<f64>,
}

#[derive(Debug, Args, Clone)]
pub struct ExactArgs {
    #[arg(long)]
    pub atoms: u64,
    #[arg(long)]
    pub n: u64,
    #[arg(long)]
    pub rabi: f64,
    #[arg(long)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub detuning: f64,
    /// Integration time τ.
    #[arg(long, conflicts_with = "p", required_unless_present = "p")]
    pub tau: Option<f64>,
    /// Escape probability; sets τ = −τ₀ ln(1 − p). Needs S_A < 1.
    #[arg(long, value_parser = parse_p)]
    pub p: Option<f64>,
    #[arg(long, default_value_t = 1e-10)]
    pub solver_tol: f64,
}

#[derive(Debug, Args, Clone)]
pub struct McArgs {
    #[arg(long, value_parser = parse_q)]
    pub q: f64,
    #[arg(long, value_parser = parse_p)]
    pub p: f64,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 1_000_000)]
    pub shots: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Compare with the closed form and exit with status 4 if a bin is off
    /// by more than 4 standard errors.
    #[arg(long)]
    pub check: bool,
}

#[derive(Debug, Args, Clone)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}

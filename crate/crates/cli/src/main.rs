mod args;
mod commands;
mod output;

use std::path::Path;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;

use args::{Cli, Command};
use commands::{Run, UsageError};
use output::{emit, resolve_target, sha256_hex, strip_out, RunManifest, SCHEMA_VERSION};

const EXIT_OTHER: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_REGIME: u8 = 3;
const EXIT_DISAGREEMENT: u8 = 4;

fn subcommand_name(command: &Command) -> &'static str {
    match command {
        Command::Params(_) => "params",
        Command::Efficiency(_) => "efficiency",
        Command::Counts(_) => "counts",
        Command::Mix(_) => "mix",
        Command::Exact(_) => "exact",
        Command::Mc(_) => "mc",
        Command::Replay(_) => "replay",
    }
}

fn execute(command: &Command) -> Result<Run> {
    match command {
        Command::Params(a) => commands::params(a),
        Command::Efficiency(a) => commands::efficiency(a),
        Command::Counts(a) => commands::counts(a),
        Command::Mix(a) => commands::mix_counts(a),
        Command::Exact(a) => commands::exact(a),
        Command::Mc(a) => commands::monte_carlo(a),
        Command::Replay(_) => unreachable!("replay is handled by the caller"),
    }
}

fn replay(manifest_path: &Path, out: Option<&Path>) -> Result<u8> {
    let text =
        std::fs::read_to_string(manifest_path).with_context(|| format!("reading {}", manifest_path.display()))?;
    let manifest: RunManifest =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", manifest_path.display()))?;
    if manifest.schema_version != SCHEMA_VERSION {
        eprintln!("warning: manifest schema {} differs from {SCHEMA_VERSION}", manifest.schema_version);
    }
    let cli = Cli::try_parse_from(std::iter::once("atomcount".to_string()).chain(manifest.args.iter().cloned()))
        .map_err(|e| UsageError(format!("manifest arguments do not parse: {e}")))?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(UsageError("a manifest cannot replay another replay".into()).into());
    }
    let bytes = execute(&cli.command)?.body.to_bytes()?;
    if let Some(path) = out {
        std::fs::write(path, &bytes).with_context(|| format!("writing {}", path.display()))?;
    }
    let digest = sha256_hex(&bytes);
    if digest == manifest.sha256 {
        eprintln!("replay matches sha256 {digest}");
        Ok(0)
    } else {
        eprintln!("replay differs: recorded {}, recomputed {digest}", manifest.sha256);
        Ok(EXIT_DISAGREEMENT)
    }
}

fn run(cli: Cli, raw_args: Vec<String>) -> Result<u8> {
    if let Command::Replay(a) = &cli.command {
        return replay(&a.manifest, cli.out.as_deref());
    }
    let name = subcommand_name(&cli.command);
    let result = execute(&cli.command)?;
    let bytes = result.body.to_bytes()?;
    let target = resolve_target(cli.out.as_deref(), name, result.body.extension());
    let manifest = RunManifest {
        schema_version: SCHEMA_VERSION,
        tool: env!("CARGO_BIN_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        subcommand: name.to_string(),
        args: strip_out(&raw_args),
        params: result.params,
        seed: result.seed,
        output: target.clone(),
        sha256: sha256_hex(&bytes),
    };
    emit(&bytes, &manifest, target.as_deref())?;
    if result.disagreements.is_empty() {
        Ok(0)
    } else {
        for d in &result.disagreements {
            eprintln!("check failed: {d}");
        }
        Ok(EXIT_DISAGREEMENT)
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return EXIT_USAGE;
    }
    match err.downcast_ref::<atomcount::Error>() {
        Some(atomcount::Error::Regime { .. }) => EXIT_REGIME,
        Some(atomcount::Error::InvalidParameter { .. }) => EXIT_USAGE,
        _ => EXIT_OTHER,
    }
}

fn main() -> ExitCode {
    let raw_args: Vec<String> = std::env::args().skip(1).collect();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli, raw_args) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

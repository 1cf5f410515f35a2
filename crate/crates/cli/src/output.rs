use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

/// Bumped whenever a column is added, removed or renamed.
pub const SCHEMA_VERSION: u32 = 1;

pub const OUT_DIR_ENV: &str = "ATOMCOUNT_OUT_DIR";

/// Twelve significant digits; `inf` for the Binomial-limit sentinel.
pub fn num(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:.11e}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: Vec<&'static str>) -> Self {
        Table { header, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.into_inner().context("flushing CSV")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Body {
    Csv(Table),
    Json(Value),
}

impl Body {
    pub fn extension(&self) -> &'static str {
        match self {
            Body::Csv(_) => "csv",
            Body::Json(_) => "json",
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        match self {
            Body::Csv(t) => t.to_csv(),
            Body::Json(v) => {
                let mut bytes = serde_json::to_vec_pretty(v)?;
                bytes.push(b'\n');
                Ok(bytes)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    /// Command-line arguments after the program name, without `--out`.
    pub args: Vec<String>,
    pub params: Value,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Drops `--out PATH` and `--out=PATH` from an argument list.
pub fn strip_out(args: &[String]) -> Vec<String> {
    let mut kept = Vec::with_capacity(args.len());
    let mut skip = false;
    for a in args {
        if skip {
            skip = false;
        } else if a == "--out" {
            skip = true;
        } else if !a.starts_with("--out=") {
            kept.push(a.clone());
        }
    }
    kept
}

/// Where the output goes: an explicit path, the env directory, or stdout.
pub fn resolve_target(out: Option<&Path>, subcommand: &str, extension: &str) -> Option<PathBuf> {
    if let Some(p) = out {
        return Some(p.to_path_buf());
    }
    std::env::var_os(OUT_DIR_ENV)
        .filter(|d| !d.is_empty())
        .map(|d| PathBuf::from(d).join(format!("{subcommand}.{extension}")))
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    output.with_file_name(name)
}

/// Writes the output and its manifest. Without a target the output goes to
/// stdout and the manifest, as one JSON line, to stderr.
pub fn emit(bytes: &[u8], manifest: &RunManifest, target: Option<&Path>) -> Result<()> {
    use std::io::Write;
    match target {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
            let mpath = manifest_path(path);
            let mut text = serde_json::to_vec_pretty(manifest)?;
            text.push(b'\n');
            std::fs::write(&mpath, text).with_context(|| format!("writing {}", mpath.display()))?;
        }
        None => {
            std::io::stdout().write_all(bytes)?;
            eprintln!("{}", serde_json::to_string(manifest)?);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(num(0.886234761712), "8.86234761712e-1");
        assert_eq!(num(f64::INFINITY), "inf");
        assert_eq!(num(0.0), "0.00000000000e0");
    }

    #[test]
    fn out_flag_is_stripped() {
        let args: Vec<String> =
            ["counts", "--out", "x.csv", "--p=0.9", "--out=y"].iter().map(|s| s.to_string()).collect();
        assert_eq!(strip_out(&args), vec!["counts", "--p=0.9"]);
    }

    #[test]
    fn manifest_sits_next_to_output() {
        assert_eq!(manifest_path(Path::new("/tmp/a/run.csv")), PathBuf::from("/tmp/a/run.csv.manifest.json"));
    }
}

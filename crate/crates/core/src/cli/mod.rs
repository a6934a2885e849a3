//! The `vieta` command-line tool.

mod config;
mod experiments;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

pub use config::{parse_config, ExactNumber, Experiment, ExperimentConfig};
pub use experiments::{run_experiment, Check, Outcome};

use crate::error::{Error, Result};
use crate::policy::NumericPolicy;

#[derive(Debug, Parser)]
#[command(name = "vieta", version, about = "Random Vieta-involution dynamics on cubic surfaces")]
pub struct Cli {
    pub experiment: Experiment,
    #[arg(long)]
    pub config: PathBuf,
    /// Replaces the configured seeds by this single seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

/// Loads the configuration named on the command line.
pub fn load(cli: &Cli) -> Result<ExperimentConfig> {
    let policy = NumericPolicy::from_env()?;
    let text = std::fs::read_to_string(&cli.config).map_err(|e| Error::Config(format!("{}: {e}", cli.config.display())))?;
    let mut cfg = parse_config(&text, cli.experiment, policy).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", cli.config.display())),
        other => other,
    })?;
    if let Some(s) = cli.seed {
        cfg.seeds = vec![s];
    }
    if let Some(out) = &cli.out {
        cfg.out = Some(out.clone());
    }
    Ok(cfg)
}

fn sha256_file(path: &Path) -> Result<(u64, String)> {
    let bytes = std::fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    Ok((bytes.len() as u64, digest.iter().map(|b| format!("{b:02x}")).collect()))
}

/// Runs the experiment, writes data, `summary.txt` and `manifest.json`, and
/// returns the process exit code.
pub fn run(cfg: &ExperimentConfig) -> Result<i32> {
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("out").join(cfg.experiment.name()));
    std::fs::create_dir_all(&out)?;
    let started = Instant::now();
    let outcome = run_experiment(cfg, &out);
    let wall = started.elapsed().as_secs_f64();

    let (outcome, error) = match outcome {
        Ok(o) => (o, None),
        Err(e @ (Error::Config(_) | Error::InvalidInput(_) | Error::InvalidDistribution(_))) => return Err(Error::Config(e.to_string())),
        Err(e) => (Outcome::default(), Some(e)),
    };
    let passed = error.is_none() && outcome.checks.iter().all(|c| c.passed);

    let mut summary = String::new();
    writeln!(summary, "{} ({})", cfg.experiment.name(), if passed { "ok" } else { "FAILED" }).ok();
    for line in &outcome.lines {
        writeln!(summary, "{line}").ok();
    }
    for c in &outcome.checks {
        writeln!(summary, "[{}] {}: {}", if c.passed { "pass" } else { "FAIL" }, c.name, c.witness).ok();
    }
    if let Some(e) = &error {
        writeln!(summary, "error: {e}").ok();
    }
    std::fs::write(out.join("summary.txt"), &summary)?;

    let mut files = Vec::new();
    for name in &outcome.files {
        let (bytes, sha256) = sha256_file(&out.join(name))?;
        files.push(FileEntry { path: name.clone(), bytes, sha256 });
    }
    let manifest = json!({
        "tool": "vieta",
        "version": env!("CARGO_PKG_VERSION"),
        "experiment": cfg.experiment.name(),
        "config": cfg,
        "workers": rayon::current_num_threads(),
        "wall_time_s": wall,
        "status": if passed { "passed" } else { "failed" },
        "error": error.as_ref().map(|e| e.to_string()),
        "checks": outcome.checks,
        "files": files,
    });
    std::fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    print!("{summary}");
    Ok(if passed { EXIT_OK } else { EXIT_FAILED })
}

pub fn main() -> i32 {
    let cli = Cli::parse();
    match load(&cli).and_then(|cfg| run(&cfg)) {
        Ok(code) => code,
        Err(Error::Config(m)) => {
            eprintln!("config error: {m}");
            EXIT_CONFIG
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FAILED
        }
    }
}

//! Command-line harness for the eigenvalue-concentration experiments.
//!
//! Each subcommand writes `<name>.csv`, `<name>.json` and
//! `<name>.manifest.txt` into the output directory. The CSV and JSON files
//! are byte-identical across reruns and thread counts; the manifest adds
//! wall-clock time and is itself a valid config file for a rerun.

pub mod commands;
pub mod config;
pub mod output;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};

pub use commands::{execute, Outcome};
pub use config::{Overrides, RunConfig};
use output::{write_atomic, OutputPaths};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] qpwegner_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("configuration error: {0}")]
    TomlRead(#[from] toml::de::Error),
    #[error("configuration error: {0}")]
    TomlWrite(#[from] toml::ser::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Exit codes.
pub const EXIT_PASS: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_FAIL: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Orbit spacing table and fitted Diophantine exponent.
    #[command(name = "spacing")]
    Spacing,
    /// One-particle Wegner estimate with an IID uniform potential.
    #[command(name = "wegner-classical")]
    WegnerClassical,
    /// Two-particle IID estimates; two-volume when `center_b` is set.
    #[command(name = "wegner-iid2p")]
    WegnerIid2p,
    /// Quasi-periodic one-volume estimate at fixed theta.
    #[command(name = "wegner-qp1")]
    WegnerQp1,
    /// Quasi-periodic two-volume estimate at fixed theta.
    #[command(name = "wegner-qp2")]
    WegnerQp2,
    /// Empirical concentration of monotone functionals.
    #[command(name = "stollmann")]
    Stollmann,
    /// Diagonal monotonicity of two-particle eigenvalues.
    #[command(name = "dm-check")]
    DmCheck,
    /// Finite-volume eigenvalue counting function.
    #[command(name = "ids")]
    Ids,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::Spacing,
        Command::WegnerClassical,
        Command::WegnerIid2p,
        Command::WegnerQp1,
        Command::WegnerQp2,
        Command::Stollmann,
        Command::DmCheck,
        Command::Ids,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Spacing => "spacing",
            Command::WegnerClassical => "wegner-classical",
            Command::WegnerIid2p => "wegner-iid2p",
            Command::WegnerQp1 => "wegner-qp1",
            Command::WegnerQp2 => "wegner-qp2",
            Command::Stollmann => "stollmann",
            Command::DmCheck => "dm-check",
            Command::Ids => "ids",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "qpwegner", version, about = "Eigenvalue-concentration experiments for quasi-periodic two-particle Hamiltonians")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML config; unknown keys are rejected.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Sample-stream seed.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Monte Carlo sample count.
    #[arg(long, global = true, value_name = "N")]
    pub omega_samples: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "qpwegner-out")]
    pub out: PathBuf,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Check eigenvalue residuals and traces.
    #[arg(long, global = true)]
    pub verify_eigen: bool,
}

/// A finished run and where its files went.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub outcome: Outcome,
    pub paths: OutputPaths,
    pub seconds: f64,
}

/// Resolves the configuration of `cli`.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let file = cli.config.as_deref().map(config::parse_file).transpose()?;
    let overrides = Overrides {
        seed: cli.seed,
        omega_samples: cli.omega_samples,
        verify_eigen: cli.verify_eigen,
    };
    config::resolve(cli.command, file.as_ref(), &overrides)
}

/// Runs `cmd` on `threads` workers (rayon's default when `None`) and
/// writes its files into `out`.
pub fn run_to_dir(cmd: Command, cfg: &RunConfig, out: &Path, threads: Option<usize>) -> Result<RunOutcome> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Config(format!("cannot start thread pool: {e}")))?;
    let start = Instant::now();
    let outcome = pool.install(|| execute(cmd, cfg))?;
    let seconds = start.elapsed().as_secs_f64();

    let paths = OutputPaths::new(out, cmd.name());
    write_atomic(&paths.csv, &outcome.csv)?;
    write_atomic(&paths.json, &outcome.json)?;
    let manifest = format!(
        "# qpwegner {} {}\n# result = {}\n# wall_clock_seconds = {seconds:.3}\n# threads = {}\n# csv = {}\n# json = {}\n{}",
        env!("CARGO_PKG_VERSION"),
        cmd.name(),
        if outcome.pass { "PASS" } else { "FAIL" },
        pool.current_num_threads(),
        paths.csv.display(),
        paths.json.display(),
        config::to_toml(cfg)?
    );
    write_atomic(&paths.manifest, manifest.as_bytes())?;
    Ok(RunOutcome { outcome, paths, seconds })
}

//! Command-line front end: `gravcollapse <subcommand> --config <path> [--out-dir <path>]`.
//!
//! Exit codes: 0 success, 1 validation, 2 numeric, 3 resource. Failures are
//! also written to stderr as one JSON object.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand as ClapSubcommand};
use serde_json::Value;
use sha2::{Digest, Sha256};

use commands::Subcommand;
pub use config::{parse_config, ScenarioConfig};
pub use error::CliError;
use output::{RunManifest, WallClock};

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "GRAVCOLLAPSE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "gravcollapse", version, about = "Gravitationally induced decoherence and collapse calculator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    /// Scenario configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir` in the configuration.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, ClapSubcommand)]
enum Command {
    /// Self-energy excess, rate and lifetime of one superposition.
    Rate(RunArgs),
    /// Rate as a function of separation.
    Sweep(RunArgs),
    /// Stochastic dephasing ensemble.
    Dephase(RunArgs),
    /// Collapse outcome and waiting-time ensemble.
    CollapseMc(RunArgs),
    /// Test-mass uncertainty heuristics.
    Testmass(RunArgs),
    /// Newtonian limit of the conformal-fluctuation kernel.
    PlanckLimit(RunArgs),
    /// Brute-force and sample-statistics checks.
    Oracle(RunArgs),
}

impl Command {
    fn split(self) -> (Subcommand, RunArgs) {
        match self {
            Command::Rate(a) => (Subcommand::Rate, a),
            Command::Sweep(a) => (Subcommand::Sweep, a),
            Command::Dephase(a) => (Subcommand::Dephase, a),
            Command::CollapseMc(a) => (Subcommand::CollapseMc, a),
            Command::Testmass(a) => (Subcommand::Testmass, a),
            Command::PlanckLimit(a) => (Subcommand::PlanckLimit, a),
            Command::Oracle(a) => (Subcommand::Oracle, a),
        }
    }
}

fn thread_cap() -> Result<Option<usize>, CliError> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::validation(format!(
                "{THREADS_ENV} must be a positive integer, got {v:?}"
            ))),
        },
    }
}

fn execute(sub: Subcommand, args: &RunArgs) -> Result<(), CliError> {
    let started = SystemTime::now();
    let clock = Instant::now();
    let bytes = std::fs::read(&args.config)
        .map_err(|e| CliError::validation(format!("cannot read {}: {e}", args.config.display())))?;
    let text = std::str::from_utf8(&bytes).map_err(|e| CliError::validation(format!("config is not UTF-8: {e}")))?;
    let cfg = parse_config(text)?;
    let out_dir = args
        .out_dir
        .clone()
        .or_else(|| cfg.output.as_ref().map(|o| PathBuf::from(&o.dir)))
        .unwrap_or_else(|| PathBuf::from("."));

    let outcome = match thread_cap()? {
        None => commands::run(sub, &cfg)?,
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::resource(format!("cannot start {n} worker threads: {e}")))?
            .install(|| commands::run(sub, &cfg))?,
    };

    let manifest = RunManifest {
        tool: "gravcollapse",
        version: env!("CARGO_PKG_VERSION"),
        subcommand: sub.name(),
        config_sha256: Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect(),
        seed: outcome.seed,
        conventions: Value::Object(outcome.conventions),
        error_estimates: Value::Object(outcome.error_estimates),
        tables: outcome.tables.iter().map(|t| format!("{}.csv", t.name)).collect(),
        wall_clock: WallClock {
            started_unix_s: started.duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64()),
            elapsed_s: clock.elapsed().as_secs_f64(),
        },
    };
    output::write_all(Path::new(&out_dir), &manifest, &outcome.result, &outcome.tables)?;
    outcome.failure.map_or(Ok(()), Err)
}

/// Runs the tool on `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            if code == 0 {
                let _ = e.print();
            } else {
                eprintln!("{}", CliError::validation(e.to_string().trim_end()).to_json());
            }
            return code;
        }
    };
    let (sub, args) = cli.command.split();
    match execute(sub, &args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}

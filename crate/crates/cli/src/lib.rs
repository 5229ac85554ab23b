//! Command-line driver: argument handling, configuration, and the experiment pipelines.
//!
//! ```text
//! katoklab <command> --config <path> [--seed N] [--out DIR] [--workers N]
//! ```
//!
//! Exit codes: 0 when every asserted invariant holds, 1 on an invariant failure,
//! 2 on a usage or configuration error, 3 on a numerical failure.

pub mod pipelines;
pub mod report;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::Parser;
use katoklab::config::{load_config, Command, RunConfig};
use katoklab::parallel::Workers;
use katoklab::KatokError;

pub use report::{Check, Report, Table};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_INVARIANT: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Environment variable consulted when `--workers` is absent.
pub const WORKERS_ENV: &str = "KATOKLAB_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "katoklab", version, about = "Numerical laboratory for the Katok map")]
struct Args {
    /// orbit, lyapunov, pressure-curve, spectrum, gibbs-check, ldp, decomp-stats or probes
    command: String,
    /// key=value configuration file
    #[arg(long)]
    config: PathBuf,
    /// Random seed (overrides seed)
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides output_dir)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (falls back to KATOKLAB_WORKERS, then the config)
    #[arg(long)]
    workers: Option<usize>,
}

/// Outcome of a run.
#[derive(Debug)]
pub struct RunOutcome {
    pub report: Report,
    pub exit_code: i32,
}

/// Run the configured pipeline on `config.workers` threads and write its artifacts:
/// `manifest.txt`, the pipeline's CSV tables and `summary.json`.
pub fn run(config: &RunConfig) -> Result<RunOutcome, KatokError> {
    let workers = Workers::new(config.workers);
    let report = workers.install(|| pipelines::run_pipeline(config))?;
    write_artifacts(config, &report, &config.output_dir)
        .map_err(|e| KatokError::Config(format!("cannot write to {}: {e}", config.output_dir.display())))?;
    let exit_code = if report.passed() { EXIT_PASS } else { EXIT_INVARIANT };
    Ok(RunOutcome { report, exit_code })
}

fn write_artifacts(config: &RunConfig, report: &Report, dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    // The worker count never changes results, so it stays out of the artifacts.
    let manifest = config.artifact_manifest().map_err(std::io::Error::other)?;
    std::fs::write(dir.join("manifest.txt"), manifest)?;
    report.write(dir)
}

fn exit_code_for(e: &KatokError) -> i32 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_USAGE
    }
}

/// Parse arguments, run, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
        }
    };
    let command = match Command::parse(&args.command) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("katoklab: {e}");
            return EXIT_USAGE;
        }
    };
    let mut config = match load_config(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("katoklab: {e}");
            return EXIT_USAGE;
        }
    };
    config.command = command;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(out) = args.out {
        config.output_dir = out;
    }
    let env_workers = std::env::var(WORKERS_ENV).ok();
    match (args.workers, env_workers) {
        (Some(w), _) => config.workers = w,
        (None, Some(v)) => match v.trim().parse::<usize>() {
            Ok(w) => config.workers = w,
            Err(_) => {
                eprintln!("katoklab: {WORKERS_ENV} must be a positive integer, got '{v}'");
                return EXIT_USAGE;
            }
        },
        (None, None) => {}
    }
    if config.workers == 0 {
        eprintln!("katoklab: workers must be at least 1");
        return EXIT_USAGE;
    }
    match run(&config) {
        Ok(outcome) => {
            for c in &outcome.report.checks {
                let tag = match (c.asserted, c.passed) {
                    (true, true) => "ok",
                    (true, false) => "FAILED",
                    (false, true) => "ok (reported)",
                    (false, false) => "off (reported)",
                };
                eprintln!("{tag:>15}  {}  {}", c.name, c.detail);
            }
            if let Some(f) = outcome.report.first_failure() {
                eprintln!("katoklab: invariant failed: {}", f.name);
            }
            outcome.exit_code
        }
        Err(e) => {
            eprintln!("katoklab: {e}");
            exit_code_for(&e)
        }
    }
}

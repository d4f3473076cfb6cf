//! Scenario runner for the qcurv solver: a TOML config in, a JSON report,
//! CSV tables and profiles out.

// `!(x > 0.0)` is how NaN gets rejected along with the bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod output;
pub mod scenarios;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Parser;

pub use config::{Scenario, ScenarioConfig};
pub use scenarios::{bubble_origin, run, Check, Summary};

/// Success.
pub const EXIT_OK: i32 = 0;
/// Bad config, bad arguments or an I/O failure.
pub const EXIT_ERROR: i32 = 1;
/// A requested assertion failed, or a run failed under `--strict`.
pub const EXIT_ASSERTION: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "qcurv", version, about = "Radial normal solutions with prescribed Q-curvature")]
pub struct Cli {
    /// Scenario to run.
    #[arg(value_enum)]
    pub scenario: Scenario,
    /// TOML scenario config.
    #[arg(long, short)]
    pub config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Worker threads; defaults to all cores.
    #[arg(long, env = "QCURV_THREADS")]
    pub threads: Option<usize>,
    /// Treat failed or non-converged runs as fatal.
    #[arg(long)]
    pub strict: bool,
}

/// Runs the CLI and returns the process exit code.
pub fn main_with(cli: Cli) -> i32 {
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_ERROR
        }
    }
}

fn execute(cli: &Cli) -> Result<i32> {
    if let Some(t) = cli.threads {
        anyhow::ensure!(t > 0, "--threads must be at least 1");
        // A second call in the same process keeps the first pool.
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            log::debug!("thread pool already set: {e}");
        }
    }
    let cfg = ScenarioConfig::from_path(&cli.config)?;
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("qcurv-out").join(cli.scenario.name()));
    let summary = run(cli.scenario, &cfg, &out).with_context(|| format!("scenario '{}'", cli.scenario.name()))?;
    for f in &summary.run_failures {
        eprintln!("{}: run failed: {f}", cli.scenario.name());
    }
    let mut code = EXIT_OK;
    for c in summary.failed_checks() {
        eprintln!("{}", c.message(cli.scenario));
        code = EXIT_ASSERTION;
    }
    if cli.strict && !summary.run_failures.is_empty() {
        eprintln!(
            "{}: {} failed run(s) under --strict",
            cli.scenario.name(),
            summary.run_failures.len()
        );
        code = EXIT_ASSERTION;
    }
    for c in summary.checks.iter().filter(|c| c.pass) {
        log::info!("{}: {} ok ({:e} <= {:e})", cli.scenario.name(), c.name, c.value, c.tolerance);
    }
    println!("{}: report written to {}", cli.scenario.name(), out.join(&cfg.output.report).display());
    Ok(code)
}

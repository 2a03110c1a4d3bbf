//! Experiment front-end: seeded multi-run execution, aggregation, plotting
//! and the fast property self-check.

mod config;
mod plot;
mod report;
mod runner;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "beliefbo", version, about = "Belief-weighted Bayesian optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute all (method, seed) cells of an experiment config.
    Run {
        /// Path to the TOML experiment config.
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the config; BELIEFBO_OUT prefixes
        /// relative paths).
        #[arg(long)]
        out: Option<String>,
        /// Restrict to a subset of seeds (comma-separated).
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Print the resolved cell matrix and exit without writing.
        #[arg(long)]
        dry_run: bool,
        /// Worker threads for cell execution.
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Aggregate result files into per-iteration regret quantiles.
    Report {
        /// Directory holding per-cell result CSVs.
        dir: PathBuf,
        /// Output aggregate file (default: <dir>/aggregate.csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render an aggregate file as a static SVG regret plot.
    Plot {
        /// Aggregate CSV produced by `report`.
        aggregate: PathBuf,
        /// Output image (default: alongside the aggregate).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the fast property suite; exit code 0 iff every check passes.
    Selfcheck {
        /// Use reduced sampling budgets.
        #[arg(long)]
        quick: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run {
            config,
            out,
            seeds,
            dry_run,
            workers,
        } => {
            let text = fs::read_to_string(&config)
                .with_context(|| format!("cannot read {}", config.display()))?;
            let mut cfg = ExperimentConfig::from_str(&text)
                .with_context(|| format!("in {}", config.display()))?;
            if let Some(seeds) = seeds {
                cfg.seeds = seeds;
                cfg.validate()?;
            }
            let out_dir = runner::resolve_out_dir(&cfg, out.as_deref());
            let outcomes = runner::cmd_run(&cfg, &out_dir, workers, dry_run)?;
            if !dry_run {
                let fresh = outcomes.iter().filter(|o| !o.skipped).count();
                println!(
                    "{} cells complete ({fresh} computed, {} skipped) -> {}",
                    outcomes.len(),
                    outcomes.len() - fresh,
                    out_dir.display()
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { dir, out } => {
            let rows = report::aggregate(&dir)?;
            let out = out.unwrap_or_else(|| dir.join("aggregate.csv"));
            report::write_aggregate(&rows, &out)?;
            println!("{} aggregate rows -> {}", rows.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Plot { aggregate, out } => {
            let rows = report::read_aggregate(&aggregate)?;
            let svg = plot::render_svg(&rows)?;
            let out = out.unwrap_or_else(|| {
                let bench = rows[0].benchmark.clone();
                aggregate
                    .parent()
                    .unwrap_or_else(|| std::path::Path::new("."))
                    .join(format!("plot-{bench}.svg"))
            });
            fs::write(&out, svg.as_bytes())?;
            println!("plot -> {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Selfcheck { quick } => {
            let results = beliefbo::selfcheck::run_selfcheck(quick);
            let mut all_pass = true;
            for r in &results {
                let rel = if r.ok_below { "<" } else { ">=" };
                println!(
                    "[{}] {:<24} statistic {:>12.4e} {rel} {:>9.1e}  ({:.1}s)",
                    if r.pass { "ok " } else { "FAIL" },
                    r.name,
                    r.statistic,
                    r.threshold,
                    r.seconds
                );
                all_pass &= r.pass;
            }
            if all_pass {
                println!("self-check: all {} checks passed", results.len());
                Ok(ExitCode::SUCCESS)
            } else {
                println!("self-check: FAILURES present");
                Ok(ExitCode::FAILURE)
            }
        }
    }
}

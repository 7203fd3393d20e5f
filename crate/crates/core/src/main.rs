use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use driftbayes::config::RunConfig;
use driftbayes::experiments::{cmd_contract, cmd_diag, cmd_infer, cmd_plot, cmd_simulate, Thresholds};
use driftbayes::Error;

#[derive(Parser)]
#[command(
    name = "driftbayes",
    version,
    about = "Bayesian drift estimation for periodic diffusions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a path (and optionally discrete observations).
    Simulate(RunArgs),
    /// Posterior inference from a path or from discrete observations.
    Infer(RunArgs),
    /// L² error of the posterior mean across growing horizons.
    Contract(RunArgs),
    /// ESS, split-R̂ and acceptance summaries of a trace CSV.
    Diag {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// ESS below this is flagged in the report (not enforced).
        #[arg(long, default_value_t = 100.0)]
        min_ess: f64,
        /// Split-R̂ above this is flagged in the report (not enforced).
        #[arg(long, default_value_t = 1.01)]
        max_rhat: f64,
    },
    /// SVG plots of credible bands and the path histogram.
    Plot {
        #[arg(long)]
        bands: PathBuf,
        #[arg(long)]
        path: Option<PathBuf>,
        /// Config whose `infer.true_drift` is overlaid on the bands.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config (default 0).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => 3,
        Error::Parse(_) | Error::Json(_) | Error::InvalidParameter { .. } => 2,
        _ => 1,
    }
}

fn run(cli: Cli) -> driftbayes::Result<serde_json::Value> {
    let load = |a: &RunArgs| -> driftbayes::Result<(RunConfig, u64)> {
        let cfg = RunConfig::load(&a.config)?;
        let seed = a.seed.or(cfg.seed).unwrap_or(0);
        Ok((cfg, seed))
    };
    match cli.command {
        Command::Simulate(a) => {
            let (cfg, seed) = load(&a)?;
            cmd_simulate(&cfg, seed, &a.out)
        }
        Command::Infer(a) => {
            let (cfg, seed) = load(&a)?;
            let base = a.config.parent().unwrap_or(Path::new("."));
            cmd_infer(&cfg, seed, &a.out, base)
        }
        Command::Contract(a) => {
            let (cfg, seed) = load(&a)?;
            cmd_contract(&cfg, seed, &a.out)
        }
        Command::Diag {
            trace,
            out,
            min_ess,
            max_rhat,
        } => cmd_diag(&trace, &out, Thresholds { min_ess, max_rhat }),
        Command::Plot {
            bands,
            path,
            config,
            out,
        } => {
            let truth = match config {
                Some(c) => RunConfig::load(&c)?
                    .infer
                    .and_then(|i| i.true_drift)
                    .map(|d| d.build())
                    .transpose()?,
                None => None,
            };
            cmd_plot(&bands, path.as_deref(), truth.as_ref(), &out)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(report) => {
            let text = serde_json::to_string_pretty(&report["summary"]).unwrap_or_default();
            // a closed pipe on stdout is not a failure of the run
            let _ = writeln!(std::io::stdout(), "{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

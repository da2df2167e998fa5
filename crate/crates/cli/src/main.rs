use std::path::PathBuf;
use std::process::ExitCode;

use bandit_batch::analysis::{emit_plots, load_runs, AnalyzeOptions, Figure};
use bandit_batch::harness::{run_experiment, ExperimentConfig};
use clap::{Parser, Subcommand};

/// Bandit-driven minibatch selection experiments.
#[derive(Debug, Parser)]
#[command(name = "bandit-batch", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one model per (noise ratio, seed) and write run records.
    Run {
        /// Experiment config (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated seeds overriding `run.seeds`.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Output directory overriding `run.out`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize run records into CSV tables and SVG plots.
    Analyze {
        /// Directory holding run records.
        #[arg(long)]
        runs: PathBuf,
        /// Directory for CSV and SVG output.
        #[arg(long)]
        out: PathBuf,
        /// Figure families to emit.
        #[arg(long, value_delimiter = ',', default_value = "errors,occurrence,overlay,entropy")]
        figures: Vec<Figure>,
        /// Sliding window for the mislabeled-fraction overlay.
        #[arg(long)]
        window: Option<usize>,
        /// Epochs in the initial and final occurrence windows.
        #[arg(long, default_value_t = 5)]
        span: usize,
    },
}

fn run(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    match cli.command {
        Command::Run { config, seeds, out } => {
            let mut config = ExperimentConfig::load(&config)?;
            if let Some(seeds) = seeds {
                config.run.seeds = seeds;
            }
            if let Some(out) = out {
                config.run.out = out;
            }
            let files = run_experiment(&config)?;
            let mut failed = 0;
            for f in &files {
                let status = if f.failed { "failed" } else { "ok" };
                println!("{status}\t{}", f.records.display());
                failed += usize::from(f.failed);
            }
            if failed > 0 {
                return Err(format!("{failed} of {} runs failed", files.len()).into());
            }
        }
        Command::Analyze {
            runs,
            out,
            figures,
            window,
            span,
        } => {
            let data = load_runs(&runs)?;
            if data.is_empty() {
                return Err(format!("no run records found in {}", runs.display()).into());
            }
            let options = AnalyzeOptions {
                figures,
                window,
                span_epochs: span,
            };
            for path in emit_plots(&data, &out, &options)? {
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

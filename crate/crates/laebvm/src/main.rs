use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use laebvm::{ExperimentConfig, Overrides, RunOptions};

#[derive(Parser)]
#[command(name = "laebvm", version, about = "Boundary-parameter BvM experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Overrides `master_seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (outputs do not depend on this).
        #[arg(long)]
        threads: Option<usize>,
        /// Skip replicates already recorded in the output directory.
        #[arg(long)]
        resume: bool,
        /// Overrides `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config and print it with defaults filled in.
    Validate { config: PathBuf },
    /// Re-derive summary.csv from rows.csv.
    Report { out_dir: PathBuf },
}

fn main() -> ExitCode {
    match try_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn try_main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Run {
            config,
            seed,
            threads,
            resume,
            out,
        } => {
            let overrides = Overrides {
                master_seed: seed,
                output_dir: out,
            };
            let cfg = ExperimentConfig::load(&config, &overrides)?;
            let result = laebvm::run(&cfg, &RunOptions { threads, resume })
                .with_context(|| format!("running {}", cfg.experiment))?;
            println!(
                "{}: {} rows ({} computed), config {} -> {}",
                cfg.experiment,
                result.rows.len(),
                result.computed,
                &result.config_hash[..12],
                result.output_dir.display()
            );
            println!("{}", serde_json::to_string_pretty(&result.report["details"])?);
        }
        Command::Validate { config } => {
            let cfg = ExperimentConfig::load(&config, &Overrides::default())?;
            println!("{}", serde_json::to_string_pretty(&cfg)?);
            println!("config_hash {}", cfg.hash());
        }
        Command::Report { out_dir } => {
            let (summary, matched) = laebvm::report(&out_dir)?;
            println!(
                "{} summary rows re-derived; {}",
                summary.len(),
                if matched { "identical to the stored summary" } else { "stored summary replaced" }
            );
        }
    }
    Ok(())
}

//! `rlvr` - train, analyze, intervene on, and compare desk-scale RLVR runs.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use rlvr_core::analysis;
use rlvr_core::experiment::{
    run_analyze, run_compare, run_intervene, run_train, ExperimentConfig, InterveneOptions,
    RunPaths,
};

/// Root for run directories when neither --out nor the config names one.
const OUT_ENV: &str = "RLVR_OUT";

#[derive(Parser)]
#[command(name = "rlvr", version, about = "Desk-scale RLVR laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a training experiment from a config file.
    Train {
        /// TOML experiment config.
        #[arg(long)]
        config: PathBuf,
        /// Override the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Run directory (defaults to the config's output_dir, then
        /// $RLVR_OUT/<config-stem>-seed<seed>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overwrite an existing run directory.
        #[arg(long)]
        force: bool,
    },
    /// Produce report.json / report.txt for a completed run.
    Analyze {
        #[arg(long)]
        run_dir: PathBuf,
        /// Where to write the report files (defaults to the run directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stratified token-intervention study over a checkpoint.
    Intervene {
        #[arg(long)]
        run_dir: PathBuf,
        /// Checkpoint file (defaults to the run's final checkpoint).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Prompts in the sampled pool.
        #[arg(long, default_value_t = 16)]
        instances: usize,
        /// Responses per prompt.
        #[arg(long, default_value_t = 8)]
        group_size: usize,
        /// Interventions per (PPL quintile x position quintile) stratum.
        #[arg(long, default_value_t = 4)]
        per_stratum: usize,
        /// Continuations per arm (defaults to the run config's value).
        #[arg(long)]
        k: Option<usize>,
        /// Enumerate continuations exactly instead of sampling.
        #[arg(long)]
        exhaustive: bool,
        /// Override the RNG seed (defaults to the run seed).
        #[arg(long)]
        seed: Option<u64>,
        /// Output file (defaults to intervention.jsonl in the run dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare two runs step by step.
    Compare {
        #[arg(long)]
        baseline: PathBuf,
        #[arg(long)]
        shaped: PathBuf,
        /// Where to write compare.csv / compare.json (defaults to the shaped
        /// run directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the plain-text report for a run (computing it if needed).
    Report {
        #[arg(long)]
        run_dir: PathBuf,
    },
}

fn main() {
    env_logger::init();
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::Train { config, seed, out, force } => {
            let mut cfg = ExperimentConfig::load(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let out_dir = match out.or_else(|| cfg.output_dir.clone()) {
                Some(dir) => dir,
                None => {
                    let root = std::env::var(OUT_ENV).unwrap_or_else(|_| "runs".to_string());
                    let stem = config
                        .file_stem()
                        .map(|s| s.to_string_lossy().to_string())
                        .unwrap_or_else(|| "run".to_string());
                    PathBuf::from(root).join(format!("{stem}-seed{}", cfg.seed))
                }
            };
            let summary = run_train(&cfg, &out_dir, force)?;
            eprintln!("run complete: {} steps -> {}", summary.steps, out_dir.display());
            if let (Some(first), Some(last)) = (&summary.first, &summary.last) {
                eprintln!(
                    "accuracy {:.4} -> {:.4}; entropy {:.4} -> {:.4}",
                    first.accuracy, last.accuracy, first.mean_entropy, last.mean_entropy
                );
            }
            Ok(())
        }
        Command::Analyze { run_dir, out } => {
            let report = run_analyze(&run_dir, out.as_deref())?;
            let dest = out.unwrap_or(run_dir);
            eprintln!(
                "report written to {} ({} steps, {} warnings)",
                dest.display(),
                report.steps,
                report.warnings
            );
            Ok(())
        }
        Command::Intervene {
            run_dir,
            checkpoint,
            instances,
            group_size,
            per_stratum,
            k,
            exhaustive,
            seed,
            out,
        } => {
            let opts = InterveneOptions {
                checkpoint,
                instances,
                group_size,
                per_stratum,
                k,
                exhaustive,
                seed,
                out,
            };
            let summary = run_intervene(&run_dir, &opts)?;
            eprintln!(
                "{} interventions written ({} empty strata)",
                summary.selected, summary.empty_strata
            );
            Ok(())
        }
        Command::Compare { baseline, shaped, out } => {
            let out_dir = out.unwrap_or_else(|| shaped.clone());
            let summary = run_compare(&baseline, &shaped, &out_dir)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(())
        }
        Command::Report { run_dir } => {
            let paths = RunPaths::new(&run_dir);
            let report: analysis::AnalysisReport = if paths.report_json().exists() {
                serde_json::from_str(&std::fs::read_to_string(paths.report_json())?)?
            } else {
                run_analyze(&run_dir, None)?
            };
            print!("{}", analysis::render_text(&report));
            Ok(())
        }
    }
}

//! `fedq`: command-line front end of the federated recommender simulator.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use fedq_runner::pipeline::{self, FederatedOptions};
use fedq_runner::{overrides, report, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "fedq",
    version,
    about = "Federated recommender simulator with FedAvg, FedQ and model compression"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides `master_seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory. Defaults to `$FQS_OUT_DIR/<name>-seed<seed>`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dotted config override, e.g. `federation.queue_length=5`. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Root for default output directories.
    #[arg(long, env = "FQS_OUT_DIR", default_value = "runs", hide_env_values = true)]
    out_root: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Build samples, split and partition, and write them with corpus statistics.
    PrepareData(Common),
    /// Print corpus statistics as JSON.
    Stats(Common),
    /// Centralized baseline; BatchNorm models are allowed here.
    TrainCentral(Common),
    /// Federated training with FedAvg or FedQ.
    TrainFederated {
        #[command(flatten)]
        common: Common,
        /// Checkpoint every this many rounds.
        #[arg(long, default_value_t = 0)]
        checkpoint_every: usize,
        /// Continue from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// QP sweep over a trained model.
    CompressEval {
        #[command(flatten)]
        common: Common,
        /// Model file; defaults to `model.fqs` in the output directory.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Long-format CSV and a final-value summary from metric files or run directories.
    Report {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

impl Common {
    fn resolve(&self) -> Result<(ExperimentConfig, PathBuf)> {
        let base = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?
            }
            None => ExperimentConfig::default(),
        };
        let mut cfg: ExperimentConfig = overrides::apply(&base, &self.overrides)?;
        if let Some(seed) = self.seed {
            cfg.master_seed = seed;
        }
        let cfg = cfg.resolve()?;
        let out = self
            .out
            .clone()
            .unwrap_or_else(|| self.out_root.join(format!("{}-seed{}", cfg.name, cfg.master_seed)));
        Ok((cfg, out))
    }
}

fn print_final(path: &Path) -> Result<()> {
    if let Some(last) = fs::read_to_string(path)?.lines().last() {
        println!("{last}");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::PrepareData(c) => {
            let (cfg, out) = c.resolve()?;
            let p = pipeline::prepare_to_dir(&cfg, &out)?;
            println!(
                "{} train / {} validation samples, {} clients -> {}",
                p.train.len(),
                p.validation.len(),
                p.partition.num_clients(),
                out.display()
            );
        }
        Command::Stats(c) => {
            let (cfg, _) = c.resolve()?;
            println!("{}", serde_json::to_string_pretty(&pipeline::stats(&cfg)?)?);
        }
        Command::TrainCentral(c) => {
            let (cfg, out) = c.resolve()?;
            pipeline::train_central_to_dir(&cfg, &out)?;
            print_final(&out.join(pipeline::METRICS_FILE))?;
        }
        Command::TrainFederated {
            common,
            checkpoint_every,
            resume,
        } => {
            let (cfg, out) = common.resolve()?;
            let opts = FederatedOptions {
                checkpoint_every,
                resume,
                stop_after: None,
            };
            pipeline::train_federated_to_dir(&cfg, &out, opts)?;
            print_final(&out.join(pipeline::METRICS_FILE))?;
        }
        Command::CompressEval { common, model } => {
            let (cfg, out) = common.resolve()?;
            for line in pipeline::compress_eval_to_dir(&cfg, model.as_deref(), &out)? {
                println!("{}", serde_json::to_string(&line)?);
            }
        }
        Command::Report { inputs, out } => {
            let r = report::emit(&inputs, &out)?;
            print!("{}", r.summary());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

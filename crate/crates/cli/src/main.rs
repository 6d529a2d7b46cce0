use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;

use config::ExperimentConfig;

/// Experiment driver for evidential multi-modality fusion on synthetic data.
#[derive(Debug, Parser)]
#[command(name = "mostfuse", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML experiment config; omitted keys use their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the data, training, noise and OOD seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Maximum relative gradient error accepted by grad-check.
    #[arg(long, global = true)]
    threshold: Option<f64>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Generate and write the train/val/test splits.
    GenData,
    /// Train on the written splits; writes a checkpoint and per-epoch log.
    Train,
    /// Evaluate a checkpoint on the clean test split.
    Eval,
    /// Gaussian-noise sweep over each modality.
    NoiseSweep,
    /// Zero-fill each modality in turn.
    Missing,
    /// Shifted (noise) and near (foreign modality) OOD probes.
    Ood,
    /// λ_F, λ_C, loss-term and unimodal ablations.
    Ablate,
    /// Compare analytic and finite-difference gradients.
    GradCheck,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::GenData => "gen-data",
            Command::Train => "train",
            Command::Eval => "eval",
            Command::NoiseSweep => "noise-sweep",
            Command::Missing => "missing",
            Command::Ood => "ood",
            Command::Ablate => "ablate",
            Command::GradCheck => "grad-check",
        }
    }
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let mut cfg = ExperimentConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.override_seed(seed);
    }
    if let Some(t) = cli.threshold {
        cfg.grad_check.threshold = t;
    }
    cfg.validate()?;
    std::fs::create_dir_all(&cli.out)?;
    let out = cli.out.as_path();
    match cli.command {
        Command::GenData => commands::gen_data(&cfg, out),
        Command::Train => commands::train(&cfg, out),
        Command::Eval => commands::eval(&cfg, out),
        Command::NoiseSweep => commands::noise_sweep(&cfg, out),
        Command::Missing => commands::missing(&cfg, out),
        Command::Ood => commands::ood(&cfg, out),
        Command::Ablate => commands::ablate(&cfg, out),
        Command::GradCheck => commands::grad_check(&cfg, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // one line: command name and the JSON-quoted error chain
            let msg = serde_json::to_string(&format!("{e:#}")).unwrap();
            eprintln!("error command={} message={msg}", cli.command.name());
            ExitCode::FAILURE
        }
    }
}

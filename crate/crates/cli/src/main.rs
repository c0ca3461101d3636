use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use cfjam_cli::{cmd_eval, cmd_generate, cmd_train, parse_tau_set, RunConfig};

/// Jamming detection in cell-free MIMO: simulate, train, evaluate.
#[derive(Parser)]
#[command(name = "cfjam", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration file; defaults apply when absent.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Worker threads (also: CFJAM_THREADS); defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate labeled graph sequences and write a dataset directory.
    Generate {
        #[command(flatten)]
        common: CommonArgs,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the LOS mixing factor (1 = deterministic, 0 = Rayleigh).
        #[arg(long)]
        beta: Option<f64>,
        /// Jammer persistence values, e.g. `10` or `1-10` or `1,3,5`.
        #[arg(long = "tau-set")]
        tau_set: Option<String>,
        /// Number of sequences to generate.
        #[arg(long)]
        sequences: Option<usize>,
        /// Output dataset directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the detector on a generated dataset.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Override the training seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Dataset directory to train on.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Output checkpoint path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a dataset's test split.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        /// Seed for the balanced clean-sequence sampling in the sweep.
        #[arg(long)]
        seed: Option<u64>,
        /// Checkpoint to evaluate.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Dataset directory holding the test split.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Also evaluate per tau and write the sweep table.
        #[arg(long = "sweep-tau")]
        sweep_tau: bool,
        /// Output report directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(common: &CommonArgs) -> Result<RunConfig> {
    match &common.config {
        Some(path) => RunConfig::load(path),
        None => Ok(RunConfig::default()),
    }
}

fn init_threads(common: &CommonArgs) {
    let n = common.threads.or_else(|| {
        std::env::var("CFJAM_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = n {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global();
        }
    }
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Generate {
            common,
            seed,
            beta,
            tau_set,
            sequences,
            out,
        } => {
            init_threads(&common);
            let mut cfg = load_config(&common)?;
            if let Some(s) = seed {
                cfg.scenario.seed = s;
            }
            if let Some(b) = beta {
                cfg.scenario.beta = b;
            }
            if let Some(ts) = tau_set {
                cfg.dataset.tau_set = parse_tau_set(&ts)?;
            }
            if let Some(n) = sequences {
                cfg.dataset.n_sequences = n;
            }
            if let Some(dir) = out {
                cfg.dataset_dir = dir;
            }
            cmd_generate(&cfg)
        }
        Command::Train {
            common,
            seed,
            dataset,
            out,
        } => {
            init_threads(&common);
            let mut cfg = load_config(&common)?;
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            if let Some(dir) = dataset {
                cfg.dataset_dir = dir;
            }
            if let Some(path) = out {
                cfg.checkpoint_path = path;
            }
            cmd_train(&cfg)
        }
        Command::Eval {
            common,
            seed,
            checkpoint,
            dataset,
            sweep_tau,
            out,
        } => {
            init_threads(&common);
            let mut cfg = load_config(&common)?;
            if let Some(path) = checkpoint {
                cfg.checkpoint_path = path;
            }
            if let Some(dir) = dataset {
                cfg.dataset_dir = dir;
            }
            if let Some(dir) = out {
                cfg.report_path = dir;
            }
            let eval_seed = seed.unwrap_or(cfg.scenario.seed);
            cmd_eval(&cfg, sweep_tau, eval_seed)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

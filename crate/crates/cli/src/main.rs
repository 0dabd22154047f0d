//! `langdaug` experiment runner.
//!
//! Every subcommand reads upstream artifacts from and writes its own outputs
//! under `--out`, one directory per subcommand.

mod commands;
mod config;
mod run_dir;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::ExperimentConfig;
use langdaug::{Error, Result};

#[derive(Parser)]
#[command(name = "langdaug", version, about = "Langevin data augmentation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run directory shared by all subcommands.
    #[arg(long, global = true, default_value = "runs/default")]
    out: PathBuf,
    /// Worker threads; outputs do not depend on this.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Replaces `base_seed` from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Generate the multi-domain benchmark.
    GenData,
    /// Train one energy per ordered domain pair.
    TrainEbms,
    /// Run Langevin chains and store the augmented dataset.
    Augment,
    /// Train segmenters on all training splits and score each test split.
    TrainSeg,
    /// Leave-one-domain-out evaluation, with and without augmentation.
    EvalLoo,
    /// Taylor remainder scan, Rademacher study and bound coverage.
    VerifyTheory,
    /// Leave-one-out evaluation over one ablation axis.
    Sweep,
    /// 2-D PCA coordinates of source and augmented samples.
    Project,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        _ if e.is_divergence() => 4,
        Error::Numeric(_) => 4,
        Error::Config(_) | Error::Json(_) => 2,
        Error::MissingArtifact(_) => 3,
        Error::Pair { source, .. } | Error::Training { source, .. } => exit_code(source),
        _ => 1,
    }
}

fn run(cli: &Cli) -> Result<()> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::config("--config is required"))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = cli.seed {
        cfg.base_seed = s;
    }
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(Error::config("--jobs must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    }
    std::fs::create_dir_all(&cli.out)?;
    let out = &cli.out;
    match cli.command {
        Command::GenData => commands::gen_data(&cfg, out),
        Command::TrainEbms => commands::train_ebms(&cfg, out),
        Command::Augment => commands::augment(&cfg, out),
        Command::TrainSeg => commands::train_seg(&cfg, out),
        Command::EvalLoo => commands::eval_loo(&cfg, out),
        Command::VerifyTheory => commands::verify_theory(&cfg, out),
        Command::Sweep => commands::sweep(&cfg, out),
        Command::Project => commands::project(&cfg, out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use config::{ConfigError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "rlqite", version, about = "QITE with RL-optimized term ordering")]
struct Cli {
    /// TOML experiment file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Zero wall-clock columns so reruns are byte-identical.
    #[arg(long, global = true)]
    deterministic: bool,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// start:stop:step (inclusive).
    #[arg(long, global = true)]
    beta_grid: Option<String>,
    /// standard, randomized, replay, trained (comma-separated).
    #[arg(long, global = true)]
    scheme: Option<String>,
    /// table2, table4 or a label-grid JSON file. Implies --scheme replay
    /// unless --scheme is given.
    #[arg(long, global = true)]
    replay: Option<String>,
    /// Checkpoint directory or file for the trained scheme.
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run QITE over a beta grid for the selected schemes.
    Run,
    /// Train an ordering agent.
    Train {
        /// Continue from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Standard vs randomized vs trained energies over system size.
    Scaling,
    /// Pairwise Hamming distances between greedy protocols.
    Hamming {
        #[arg(required = true, num_args = 2..)]
        checkpoints: Vec<PathBuf>,
    },
    /// List the bundled replay schedules.
    ReplayList,
}

fn resolve(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if cli.deterministic {
        cfg.deterministic = true;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if let Some(g) = &cli.beta_grid {
        cfg.sweep.beta_grid = Some(g.clone());
    }
    if let Some(r) = &cli.replay {
        cfg.schedule.replay = Some(r.clone());
        if cli.scheme.is_none() {
            cfg.schedule.scheme = "replay".into();
        }
    }
    if let Some(s) = &cli.scheme {
        cfg.schedule.scheme = s.clone();
    }
    if let Some(c) = &cli.checkpoint {
        cfg.schedule.checkpoint = Some(c.clone());
    }
    Ok(cfg)
}

fn dispatch(cli: &Cli) -> Result<()> {
    if let Command::ReplayList = cli.command {
        return commands::cmd_replay_list();
    }
    let cfg = resolve(cli)?;
    match &cli.command {
        Command::Run => commands::cmd_run(&cfg),
        Command::Train { resume } => commands::cmd_train(&cfg, *resume),
        Command::Scaling => commands::cmd_scaling(&cfg),
        Command::Hamming { checkpoints } => commands::cmd_hamming(&cfg, checkpoints),
        Command::ReplayList => unreachable!(),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.chain().any(|e| e.downcast_ref::<ConfigError>().is_some()) {
        return 2;
    }
    let numeric = err
        .chain()
        .filter_map(|e| e.downcast_ref::<rlqite::Error>())
        .any(rlqite::Error::is_numeric);
    if numeric {
        3
    } else {
        1
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

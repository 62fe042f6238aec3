use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use trajirl::commands::{self, EvalSplit};
use trajirl::config::RunConfig;
use trajirl::domain::ScenarioTag;
use trajirl::eval::CsaWeights;
use trajirl::policy::PolicyCheckpoint;
use trajirl::trainer::Checkpoint;
use trajirl::{Error, Result};

/// Trajectory prediction with graph attention, a selective state-space
/// decoder, MaxEnt IRL rewards and a TD3 driving policy.
#[derive(Parser)]
#[command(name = "trajirl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults apply to every omitted key.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set train.epochs=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Set every seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Write artifacts here instead of a new timestamped run directory.
    #[arg(long)]
    run_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic 25 Hz recordings, one CSV per recording.
    Synth {
        kind: ScenarioTag,
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 6)]
        agents: usize,
        #[arg(long, default_value = "data")]
        out: PathBuf,
    },
    /// Train the predictor on the source datasets.
    Train {
        #[command(flatten)]
        common: Common,
        /// Drop the learned-reward term.
        #[arg(long)]
        no_irl: bool,
        /// Drop the interaction graph.
        #[arg(long)]
        no_gnn: bool,
    },
    /// Evaluate a predictor checkpoint.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value_t = EvalSplit::Test)]
        split: EvalSplit,
    },
    /// Train the driving policy on source demonstrations.
    TrainPolicy {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Compare the predictor alone with predictor plus policy.
    OodEval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        policy: PathBuf,
    },
    /// Cross-scenario adaptability score from two report CSVs.
    Csa {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        known: PathBuf,
        #[arg(long)]
        unknown: PathBuf,
        /// Weight of the known-scenario term (config `csa.alpha` by default).
        #[arg(long)]
        alpha: Option<f64>,
        /// Weight of the degradation penalty (config `csa.beta` by default).
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Train and evaluate all four IRL/GNN combinations.
    Ablate {
        #[command(flatten)]
        common: Common,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(commands::exit_code(&e) as u8)
        }
    }
}

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Config(format!("{} does not exist", path.display())))
    }
}

/// Config from `--config` (or, failing that, the checkpoint's echo) plus overrides.
fn resolve(common: &Common, echo: Option<&str>) -> Result<RunConfig> {
    let mut config = match (&common.config, echo) {
        (None, Some(text)) => RunConfig::load_from_str(text, &common.overrides)?,
        _ => RunConfig::load(common.config.as_deref(), &common.overrides)?,
    };
    if let Some(s) = common.seed {
        config.reseed(s);
    }
    Ok(config)
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    require(path)?;
    Checkpoint::load(path)
}

fn run(command: Command) -> Result<PathBuf> {
    match command {
        Command::Synth {
            kind,
            count,
            seed,
            agents,
            out,
        } => {
            commands::cmd_synth(kind, count, agents, seed, &out)?;
            Ok(out)
        }
        Command::Train { common, no_irl, no_gnn } => {
            let mut config = resolve(&common, None)?;
            config.train.use_irl &= !no_irl;
            config.train.use_gnn &= !no_gnn;
            let dir = commands::run_dir(&config, "train", common.run_dir.as_deref())?;
            commands::cmd_train(&config, &dir)?;
            Ok(dir)
        }
        Command::Eval {
            common,
            checkpoint,
            split,
        } => {
            let ck = load_checkpoint(&checkpoint)?;
            let config = resolve(&common, Some(&ck.config_echo))?;
            let dir = commands::run_dir(&config, "eval", common.run_dir.as_deref())?;
            commands::cmd_eval(&config, &ck, split, &dir)?;
            Ok(dir)
        }
        Command::TrainPolicy { common, checkpoint } => {
            let ck = load_checkpoint(&checkpoint)?;
            let config = resolve(&common, Some(&ck.config_echo))?;
            let dir = commands::run_dir(&config, "train-policy", common.run_dir.as_deref())?;
            commands::cmd_train_policy(&config, &ck, &dir)?;
            Ok(dir)
        }
        Command::OodEval {
            common,
            checkpoint,
            policy,
        } => {
            let ck = load_checkpoint(&checkpoint)?;
            require(&policy)?;
            let pol = PolicyCheckpoint::load(&policy)?;
            let config = resolve(&common, Some(&ck.config_echo))?;
            let dir = commands::run_dir(&config, "ood-eval", common.run_dir.as_deref())?;
            commands::cmd_ood_eval(&config, &ck, &pol, &dir)?;
            Ok(dir)
        }
        Command::Csa {
            common,
            known,
            unknown,
            alpha,
            beta,
        } => {
            require(&known)?;
            require(&unknown)?;
            let mut config = resolve(&common, None)?;
            config.csa = CsaWeights {
                alpha: alpha.unwrap_or(config.csa.alpha),
                beta: beta.unwrap_or(config.csa.beta),
            };
            let dir = commands::run_dir(&config, "csa", common.run_dir.as_deref())?;
            commands::cmd_csa(&known, &unknown, config.csa, &dir)?;
            Ok(dir)
        }
        Command::Ablate { common } => {
            let config = resolve(&common, None)?;
            let dir = commands::run_dir(&config, "ablate", common.run_dir.as_deref())?;
            commands::cmd_ablate(&config, &dir)?;
            Ok(dir)
        }
    }
}

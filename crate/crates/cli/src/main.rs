use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use subplay_cli::commands::attack::AttackMethod;
use subplay_cli::commands::defend::{DefendArgs, DefenseKind};
use subplay_cli::commands::evaluate::EvaluateArgs;
use subplay_cli::commands::{attack, defend, evaluate, export, report, train_victim};
use subplay_cli::config::{ExperimentConfig, RawConfig};

/// Adversarial-policy laboratory for partially observed multi-agent
/// pursuit-evasion.
#[derive(Parser)]
#[command(name = "subplay", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment configuration (TOML; unknown keys are errors).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the config's output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Override the config's seed list (comma-separated).
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => RawConfig::default().resolve()?,
        };
        if let Some(seeds) = &self.seeds {
            config.seeds = seeds.clone();
            config.validate()?;
        }
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train victims by self-play and checkpoint a policy pool.
    TrainVictim {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Train an adversary against a frozen victim checkpoint.
    Attack {
        #[command(flatten)]
        config: ConfigArgs,
        /// Victim team checkpoint (unused for --method heuristic).
        #[arg(long)]
        victim: Option<PathBuf>,
        /// subplay | victimplay | selfplay | heuristic
        #[arg(long)]
        method: String,
    },
    /// Evaluate a frozen adversary against a frozen victim.
    Evaluate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        adversary: PathBuf,
        #[arg(long)]
        victim: PathBuf,
        /// Label for report bundles (defaults to the artifact kind).
        #[arg(long)]
        label: Option<String>,
        /// Metrics CSV of the heuristic baseline (enables the improvement delta).
        #[arg(long)]
        baseline_record: Option<PathBuf>,
        /// Metrics CSV of the victim-play comparator.
        #[arg(long)]
        victimplay_record: Option<PathBuf>,
        /// Also write per-entity trajectories (debugging, determinism checks).
        #[arg(long)]
        dump_trajectories: bool,
    },
    /// Run a victim-side defense.
    Defend {
        #[command(flatten)]
        config: ConfigArgs,
        /// retrain | ensemble | finetune
        #[arg(long)]
        defense: String,
        #[arg(long)]
        victim: Option<PathBuf>,
        #[arg(long)]
        adversary: Option<PathBuf>,
        /// Pool manifest (JSON with a checkpoints list) for --defense ensemble.
        #[arg(long)]
        pool: Option<PathBuf>,
    },
    /// Aggregate run directories into plot-ready CSV bundles.
    Report {
        /// Output directory for the bundles.
        #[arg(long)]
        out: PathBuf,
        /// Run directories (each holding manifest.json, or seed_* children).
        run_dirs: Vec<PathBuf>,
    },
    /// Export victim actor activations against one or more opponents.
    ExportActivations {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        victim: PathBuf,
        /// Opponent as label=path; repeatable.
        #[arg(long = "opponent")]
        opponents: Vec<String>,
        #[arg(long, default_value_t = 5000)]
        timesteps: usize,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::TrainVictim { config } => {
            let cfg = config.load()?;
            let paths = train_victim::run(&cfg, config.out_dir.as_deref())?;
            for p in paths {
                println!("victim checkpoint: {}", p.display());
            }
        }
        Command::Attack {
            config,
            victim,
            method,
        } => {
            let cfg = config.load()?;
            let method = AttackMethod::parse(&method)?;
            let victim = match (&victim, method) {
                (Some(v), _) => v.clone(),
                (None, AttackMethod::Heuristic | AttackMethod::Selfplay) => PathBuf::new(),
                (None, _) => anyhow::bail!("--victim is required for method {}", method.as_str()),
            };
            let paths = attack::run(&cfg, &victim, method, config.out_dir.as_deref())?;
            for p in paths {
                println!("adversary artifact: {}", p.display());
            }
        }
        Command::Evaluate {
            config,
            adversary,
            victim,
            label,
            baseline_record,
            victimplay_record,
            dump_trajectories,
        } => {
            let cfg = config.load()?;
            let args = EvaluateArgs {
                adversary: &adversary,
                victim: &victim,
                label,
                baseline_record,
                victimplay_record,
                dump_trajectories,
            };
            let path = evaluate::run(&cfg, &args, config.out_dir.as_deref())?;
            println!("metrics: {}", path.display());
        }
        Command::Defend {
            config,
            defense,
            victim,
            adversary,
            pool,
        } => {
            let cfg = config.load()?;
            let args = DefendArgs {
                defense: DefenseKind::parse(&defense)?,
                victim: victim.as_deref(),
                adversary: adversary.as_deref(),
                pool: pool.as_deref(),
            };
            let path = defend::run(&cfg, &args, config.out_dir.as_deref())?;
            println!("defense report: {}", path.display());
        }
        Command::Report { out, run_dirs } => {
            let paths = report::run(&out, &run_dirs)?;
            for p in paths {
                println!("bundle: {}", p.display());
            }
        }
        Command::ExportActivations {
            config,
            victim,
            opponents,
            timesteps,
        } => {
            let cfg = config.load()?;
            let parsed: Vec<(String, PathBuf)> = opponents
                .iter()
                .map(|spec| {
                    let (label, path) = spec
                        .split_once('=')
                        .with_context(|| format!("opponent '{spec}' must be label=path"))?;
                    Ok((label.to_string(), PathBuf::from(path)))
                })
                .collect::<Result<_>>()?;
            if parsed.is_empty() {
                anyhow::bail!("need at least one --opponent label=path");
            }
            let path = export::run(&cfg, &victim, &parsed, timesteps, config.out_dir.as_deref())?;
            println!("activations: {}", path.display());
        }
    }
    Ok(())
}

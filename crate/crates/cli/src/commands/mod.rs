//! CLI subcommand implementations.

pub mod attack;
pub mod defend;
pub mod evaluate;
pub mod export;
pub mod report;
pub mod train_victim;

use crate::artifacts::AdversaryArtifact;
use crate::config::ExperimentConfig;
use anyhow::{bail, Context, Result};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use subplay_core::engine::{Env, Side};
use subplay_core::evalkit::EvalAdversary;
use subplay_core::learner::AgentLearner;

/// Resolve the run's output directory: the config's `out_dir` (or an explicit
/// override), joined under `$SUBPLAY_OUT_ROOT` when that is set and the path
/// is relative.
pub fn resolve_out_dir(config: &ExperimentConfig, override_dir: Option<&Path>) -> PathBuf {
    let dir = override_dir.map(Path::to_path_buf).unwrap_or_else(|| config.out_dir.clone());
    match std::env::var_os("SUBPLAY_OUT_ROOT") {
        Some(root) if dir.is_relative() => PathBuf::from(root).join(dir),
        _ => dir,
    }
}

pub fn seed_dir(out: &Path, seed: u64) -> Result<PathBuf> {
    let dir = out.join(format!("seed_{seed}"));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

/// Check a victim team against the configured environment dimensions.
pub fn check_victim_dims(config: &ExperimentConfig, victim: &[AgentLearner]) -> Result<Env> {
    let env = Env::new(config.env_config()).map_err(|e| anyhow::anyhow!("{e}"))?;
    if victim.len() != config.victims {
        bail!(
            "victim checkpoint holds {} agents but the config wants {}",
            victim.len(),
            config.victims
        );
    }
    for (j, learner) in victim.iter().enumerate() {
        let expected = env.obs_dim(Side::Victim, j);
        if learner.actor.in_dim != expected {
            bail!(
                "victim agent {j} expects observation dim {} but the configured environment \
                 produces {expected} (environment={}, scenario={})",
                learner.actor.in_dim,
                config.environment,
                config.scenario
            );
        }
    }
    Ok(env)
}

/// Borrow an artifact as an evaluator-side policy.
pub fn as_eval_adversary(artifact: &AdversaryArtifact) -> EvalAdversary<'_> {
    match artifact {
        AdversaryArtifact::Heuristic { speed_scale } => EvalAdversary::Heuristic {
            speed_scale: *speed_scale,
        },
        AdversaryArtifact::Team(learners) => {
            EvalAdversary::Single(learners.iter().map(|l| &l.actor).collect())
        }
        AdversaryArtifact::Set(set) => EvalAdversary::from_set(set),
    }
}

pub fn artifact_kind(artifact: &AdversaryArtifact) -> &'static str {
    match artifact {
        AdversaryArtifact::Heuristic { .. } => "heuristic",
        AdversaryArtifact::Team(_) => "single_policy",
        AdversaryArtifact::Set(_) => "subplay",
    }
}

/// Render a float so the CSV round-trips bit-exactly.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v}")
    }
}

/// Write single-policy training logs (victim-play, self-play).
pub fn write_train_log(path: &Path, log: &[subplay_core::opponents::TrainLogRow]) -> Result<()> {
    let mut out = String::from("episode,critic_loss,actor_loss,adversary_return,victim_return,collisions\n");
    for row in log {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            row.episode,
            fmt_f64(row.critic_loss),
            fmt_f64(row.actor_loss),
            fmt_f64(row.adversary_return),
            fmt_f64(row.victim_return),
            row.collisions
        )
        .expect("write");
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Write subgame-attack training logs: per-episode occupancy estimates,
/// empirical counts, retained PM scores, buffer fill, and losses.
pub fn write_attack_log(path: &Path, log: &[subplay_core::subplay::AttackLogRow]) -> Result<()> {
    let Some(first) = log.first() else {
        std::fs::write(path, "episode\n")?;
        return Ok(());
    };
    let agents = first.occupancy.len();
    let subgames = first.occupancy.first().map(|o| o.len()).unwrap_or(0);
    let mut header = String::from("episode");
    for i in 0..agents {
        for k in 0..subgames {
            write!(header, ",or{i}_{k}").expect("write");
        }
    }
    for i in 0..agents {
        for k in 0..subgames {
            write!(header, ",count{i}_{k}").expect("write");
        }
    }
    for i in 0..agents {
        for k in 0..subgames {
            write!(header, ",pm{i}_{k}").expect("write");
        }
    }
    for i in 0..agents {
        for k in 0..subgames {
            write!(header, ",buf{i}_{k}").expect("write");
        }
    }
    header.push_str(",critic_loss,actor_loss\n");
    let mut out = header;
    for row in log {
        write!(out, "{}", row.episode).expect("write");
        for per_agent in &row.occupancy {
            for v in per_agent {
                write!(out, ",{}", fmt_f64(*v)).expect("write");
            }
        }
        for per_agent in &row.episode_counts {
            for v in per_agent {
                write!(out, ",{v}").expect("write");
            }
        }
        for per_agent in &row.retained_pm {
            for v in per_agent {
                write!(out, ",{}", v.map(fmt_f64).unwrap_or_else(|| "nan".into())).expect("write");
            }
        }
        for per_agent in &row.buffer_lens {
            for v in per_agent {
                write!(out, ",{v}").expect("write");
            }
        }
        writeln!(out, ",{},{}", fmt_f64(row.critic_loss), fmt_f64(row.actor_loss)).expect("write");
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Median of a non-empty slice (mean of the middle pair for even lengths).
pub fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

//! Metrics and the evaluation runner.
//!
//! Catch rate (CR) is the fraction of episodes with at least one collision;
//! collision frequency (CF) is the mean number of per-step predator-prey
//! overlaps per episode; PM is their harmonic mean (zero when either is
//! zero). The attacker minimises all three.

mod defense;

pub use defense::{
    defense_adversarial_retraining, defense_fine_tuning, defense_policy_ensemble,
    DefenseTimelinePoint, EnsembleReport, RetrainingRound,
};

use crate::engine::Env;
use crate::error::{Error, Result};
use crate::learner::MlpParams;
use crate::observe::{Limitation, SubgamePartition};
use crate::opponents::HeuristicPolicy;
use crate::rng::stream;
use crate::rollout::{run_episode, ActivationRow, AdversaryActor, EpisodeOptions, VictimActor};
use crate::subplay::SubpolicySet;
use std::fmt::Write as _;

/// Harmonic mean of CR and CF, with the zero-limit convention.
pub fn harmonic_mean_pm(cr: f64, cf: f64) -> f64 {
    if cr <= 0.0 || cf <= 0.0 {
        0.0
    } else {
        2.0 * cr * cf / (cr + cf)
    }
}

/// Average attack improvement relative to the victim-play comparator:
/// `(PM_V - PM_S) / (PM_B - PM_V)`.
pub fn improvement_delta(pm_b: f64, pm_v: f64, pm_s: f64) -> Result<f64> {
    if pm_b <= pm_v {
        return Err(Error::DeltaUndefined { pm_b, pm_v });
    }
    Ok((pm_v - pm_s) / (pm_b - pm_v))
}

/// A frozen adversary-side policy under evaluation.
pub enum EvalAdversary<'a> {
    Heuristic { speed_scale: f64 },
    Single(Vec<&'a MlpParams>),
    Combined(Vec<Vec<&'a MlpParams>>),
}

impl<'a> EvalAdversary<'a> {
    pub fn from_set(set: &'a SubpolicySet) -> Self {
        EvalAdversary::Combined(set.actor_grid())
    }
}

#[derive(Clone, Debug, Default)]
pub struct EvalAggregate {
    pub episodes: usize,
    pub caught_episodes: usize,
    pub collisions: usize,
    /// Steps classified per subgame, summed over adversary agents.
    pub subgame_steps: Vec<u64>,
    pub total_steps: u64,
}

impl EvalAggregate {
    pub fn cr(&self) -> f64 {
        self.caught_episodes as f64 / self.episodes.max(1) as f64
    }

    pub fn cf(&self) -> f64 {
        self.collisions as f64 / self.episodes.max(1) as f64
    }

    pub fn pm(&self) -> f64 {
        harmonic_mean_pm(self.cr(), self.cf())
    }

    pub fn occupancy(&self) -> Vec<f64> {
        self.subgame_steps
            .iter()
            .map(|s| *s as f64 / self.total_steps.max(1) as f64)
            .collect()
    }
}

/// Run `episodes` evaluation episodes under per-episode substreams of `seed`.
/// Exploration is disabled; heuristic adversaries are re-drawn per episode.
pub fn evaluate_core(
    env: &Env,
    limitation: &Limitation,
    partition: &SubgamePartition,
    adversary: &EvalAdversary,
    victim: &[&MlpParams],
    episodes: usize,
    seed: u64,
) -> Result<EvalAggregate> {
    evaluate_pool_core(
        env,
        limitation,
        partition,
        adversary,
        std::slice::from_ref(&victim.to_vec()),
        episodes,
        seed,
    )
}

/// As [`evaluate_core`], but the victim team is drawn uniformly per episode
/// from a pool. The pick stream is only consumed when the pool has more than
/// one member.
pub fn evaluate_pool_core(
    env: &Env,
    limitation: &Limitation,
    partition: &SubgamePartition,
    adversary: &EvalAdversary,
    victim_pool: &[Vec<&MlpParams>],
    episodes: usize,
    seed: u64,
) -> Result<EvalAggregate> {
    evaluate_pool_trace(
        env, limitation, partition, adversary, victim_pool, episodes, seed, None,
    )
}

/// Evaluation with an optional trajectory sink (one line per entity per step,
/// for debugging and bit-level determinism checks).
#[allow(clippy::too_many_arguments)]
pub fn evaluate_pool_trace(
    env: &Env,
    limitation: &Limitation,
    partition: &SubgamePartition,
    adversary: &EvalAdversary,
    victim_pool: &[Vec<&MlpParams>],
    episodes: usize,
    seed: u64,
    mut trajectory: Option<&mut String>,
) -> Result<EvalAggregate> {
    use rand::Rng;
    if victim_pool.is_empty() {
        return Err(Error::contract("victim pool must not be empty"));
    }
    let mut agg = EvalAggregate {
        subgame_steps: vec![0; partition.subgames()],
        ..EvalAggregate::default()
    };
    let mut pick_rng = stream(seed, "eval-pick", 0);
    for e in 0..episodes {
        let victim = if victim_pool.len() == 1 {
            &victim_pool[0]
        } else {
            &victim_pool[pick_rng.gen_range(0..victim_pool.len())]
        };
        let mut env_rng = stream(seed, "eval-env", e as u64);
        let mut mask_rng = stream(seed, "eval-mask", e as u64);
        let mut aux_rng = stream(seed, "eval-aux", e as u64);
        let mut heuristic;
        let mut actor = match adversary {
            EvalAdversary::Heuristic { speed_scale } => {
                let mut hr = stream(seed, "eval-heur", e as u64);
                heuristic =
                    HeuristicPolicy::new(env.config.adversaries, *speed_scale, &mut hr);
                AdversaryActor::Heuristic(&mut heuristic)
            }
            EvalAdversary::Single(actors) => AdversaryActor::Actors(actors.clone()),
            EvalAdversary::Combined(grid) => AdversaryActor::CombinedActors(grid.clone()),
        };
        let record = run_episode(
            env,
            limitation,
            partition,
            &mut actor,
            &VictimActor::frozen(victim.clone()),
            &mut env_rng,
            &mut mask_rng,
            &mut aux_rng,
            EpisodeOptions {
                trajectory: trajectory.as_mut().map(|sink| (&mut **sink, e)),
                ..EpisodeOptions::default()
            },
        )?;
        agg.episodes += 1;
        agg.caught_episodes += record.caught as usize;
        agg.collisions += record.collisions;
        for counts in &record.subgame_counts {
            for (k, c) in counts.iter().enumerate() {
                agg.subgame_steps[k] += *c as u64;
            }
            agg.total_steps += counts.iter().sum::<usize>() as u64;
        }
    }
    Ok(agg)
}

/// Evaluation summary over a seed grid. `num_episodes` counts all episodes
/// aggregated into the record (episodes per seed times seeds).
#[derive(Clone, Debug)]
pub struct MetricsRecord {
    pub cr: f64,
    pub cf: f64,
    pub pm: f64,
    pub num_episodes: usize,
    pub occupancy: Vec<f64>,
    pub seeds: Vec<u64>,
    pub config_hash: String,
}

impl MetricsRecord {
    pub fn csv_header(subgames: usize) -> String {
        let mut h = String::from("cr,cf,pm,num_episodes");
        for k in 0..subgames {
            write!(h, ",or_{k}").expect("write");
        }
        h.push_str(",seeds,config_hash");
        h
    }

    pub fn csv_row(&self) -> String {
        let mut row = format!("{},{},{},{}", self.cr, self.cf, self.pm, self.num_episodes);
        for v in &self.occupancy {
            write!(row, ",{v}").expect("write");
        }
        let seeds = self
            .seeds
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .join(";");
        write!(row, ",{seeds},{}", self.config_hash).expect("write");
        row
    }
}

/// Evaluate frozen policies over `episodes_per_seed` episodes for every seed
/// in the grid and aggregate into one record.
pub fn evaluate(
    env: &Env,
    limitation: &Limitation,
    partition: &SubgamePartition,
    adversary: &EvalAdversary,
    victim: &[&MlpParams],
    episodes_per_seed: usize,
    seeds: &[u64],
    config_hash: &str,
) -> Result<MetricsRecord> {
    if episodes_per_seed < 1 || seeds.is_empty() {
        return Err(Error::contract("evaluation needs at least one episode"));
    }
    let mut total = EvalAggregate {
        subgame_steps: vec![0; partition.subgames()],
        ..EvalAggregate::default()
    };
    for seed in seeds {
        let agg = evaluate_core(env, limitation, partition, adversary, victim, episodes_per_seed, *seed)?;
        total.episodes += agg.episodes;
        total.caught_episodes += agg.caught_episodes;
        total.collisions += agg.collisions;
        total.total_steps += agg.total_steps;
        for (k, s) in agg.subgame_steps.iter().enumerate() {
            total.subgame_steps[k] += s;
        }
    }
    Ok(MetricsRecord {
        cr: total.cr(),
        cf: total.cf(),
        pm: total.pm(),
        num_episodes: total.episodes,
        occupancy: total.occupancy(),
        seeds: seeds.to_vec(),
        config_hash: config_hash.to_string(),
    })
}

/// Capture the 128-unit second-hidden-layer activations of every victim
/// agent's actor for exactly `timesteps` steps against each opponent.
/// Rows: `(opponent_label, episode, step, agent, v0..v127)`.
pub fn export_activations(
    env: &Env,
    limitation: &Limitation,
    partition: &SubgamePartition,
    victim: &[&MlpParams],
    opponents: &[(String, EvalAdversary)],
    timesteps: usize,
    seed: u64,
    out: &mut String,
) -> Result<usize> {
    let steps = env.config.episode_steps;
    let episodes = timesteps.div_ceil(steps);
    let mut rows_written = 0usize;
    for (label, adversary) in opponents {
        let mut kept = vec![0usize; env.config.victims];
        'episodes: for e in 0..episodes {
            let mut env_rng = stream(seed, "act-env", e as u64);
            let mut mask_rng = stream(seed, "act-mask", e as u64);
            let mut aux_rng = stream(seed, "act-aux", e as u64);
            let mut heuristic;
            let mut actor = match adversary {
                EvalAdversary::Heuristic { speed_scale } => {
                    let mut hr = stream(seed, "act-heur", e as u64);
                    heuristic =
                        HeuristicPolicy::new(env.config.adversaries, *speed_scale, &mut hr);
                    AdversaryActor::Heuristic(&mut heuristic)
                }
                EvalAdversary::Single(actors) => AdversaryActor::Actors(actors.clone()),
                EvalAdversary::Combined(grid) => AdversaryActor::CombinedActors(grid.clone()),
            };
            let mut rows: Vec<ActivationRow> = Vec::new();
            run_episode(
                env,
                limitation,
                partition,
                &mut actor,
                &VictimActor::frozen(victim.to_vec()),
                &mut env_rng,
                &mut mask_rng,
                &mut aux_rng,
                EpisodeOptions {
                    activations: Some(&mut rows),
                    ..EpisodeOptions::default()
                },
            )?;
            for row in rows {
                if kept[row.agent] >= timesteps {
                    continue;
                }
                kept[row.agent] += 1;
                write!(out, "{label},{e},{},{}", row.step, row.agent).expect("write");
                for v in &row.values {
                    write!(out, ",{v}").expect("write");
                }
                out.push('\n');
                rows_written += 1;
            }
            if kept.iter().all(|k| *k >= timesteps) {
                break 'episodes;
            }
        }
    }
    Ok(rows_written)
}

/// Sanity check used by tests and the evaluation runner: recount CF from an
/// event log.
pub fn recount_collisions(events_per_episode: &[Vec<crate::engine::CollisionEvent>]) -> (f64, f64) {
    let episodes = events_per_episode.len().max(1);
    let caught = events_per_episode.iter().filter(|e| !e.is_empty()).count();
    let collisions: usize = events_per_episode.iter().map(|e| e.len()).sum();
    (
        caught as f64 / episodes as f64,
        collisions as f64 / episodes as f64,
    )
}

//! Subgame-decomposed adversarial-policy training.
//!
//! The attack keeps one subpolicy per (agent, subgame), routes every
//! interaction transition through the dissemination tables, updates
//! subpolicies at episode boundaries, and on a fixed cadence runs policy
//! meritocracy: each freshly updated candidate is substituted into the
//! retained combination, evaluated, and kept only if it strictly lowers the
//! victim's harmonic-mean score.

use super::dissemination::{build_dissemination_table, route_transition, BufferSet, DisseminationTable};
use super::occupancy::{
    aggregate_to_partition, occupancy_dynamic_observation, occupancy_static_estimation,
    occupancy_static_observation, OccupancyMethod, OccupancyVector,
};
use crate::engine::{Env, EnvConfig, Side};
use crate::error::{Error, Result};
use crate::evalkit::{evaluate_pool_core, harmonic_mean_pm, EvalAdversary};
use crate::learner::{
    AgentLearner, Algorithm, MlpParams, ADVERSARY_BATCH_SIZE, ADVERSARY_BUFFER_CAPACITY,
};
use crate::observe::{classify_subgame, Limitation, Mask, SubgamePartition};
use crate::rng::{child_seed, net_index, stream, RngStream};
use crate::rollout::{run_episode, AdversaryActor, EpisodeOptions, VictimActor};
use std::time::Instant;

/// One retained subpolicy and the score that earned its spot.
#[derive(Clone, Debug)]
pub struct RetainedSubpolicy {
    pub actor: MlpParams,
    pub pm: Option<f64>,
}

/// The deployable artifact: one retained subpolicy per (agent, subgame).
#[derive(Clone, Debug)]
pub struct SubpolicySet {
    pub algorithm: Algorithm,
    pub partition: SubgamePartition,
    pub agents: Vec<Vec<RetainedSubpolicy>>,
}

impl SubpolicySet {
    pub fn adversaries(&self) -> usize {
        self.agents.len()
    }

    pub fn subgames(&self) -> usize {
        self.partition.subgames()
    }

    pub fn actor_grid(&self) -> Vec<Vec<&MlpParams>> {
        self.agents
            .iter()
            .map(|subs| subs.iter().map(|s| &s.actor).collect())
            .collect()
    }

    pub fn retained_pm(&self) -> Vec<Vec<Option<f64>>> {
        self.agents
            .iter()
            .map(|subs| subs.iter().map(|s| s.pm).collect())
            .collect()
    }
}

/// Retention rule: the candidate replaces the incumbent only on strict
/// improvement (the attacker minimises the victim's score); a zero score is
/// the best possible and wins immediately; ties keep the incumbent.
pub fn meritocracy_wins(candidate_pm: f64, incumbent_pm: Option<f64>) -> bool {
    candidate_pm == 0.0 || incumbent_pm.map_or(true, |p| candidate_pm < p)
}

/// Hard-coded policy combination: each agent dispatches on its own mask's
/// subgame and acts with the matching retained subpolicy.
pub fn combine_policies(
    set: &SubpolicySet,
    masks: &[Mask],
    observations: &[Vec<f64>],
) -> Result<Vec<[f64; 2]>> {
    if masks.len() != set.adversaries() || observations.len() != set.adversaries() {
        return Err(Error::dims(set.adversaries(), masks.len(), "combine_policies"));
    }
    let mut actions = Vec::with_capacity(masks.len());
    for (i, (mask, obs)) in masks.iter().zip(observations).enumerate() {
        let k = classify_subgame(mask, &set.partition);
        let sub = set.agents[i]
            .get(k)
            .ok_or_else(|| Error::contract(format!("missing subpolicy for subgame {k}")))?;
        let out = sub.actor.forward(obs)?;
        actions.push([out[0].clamp(-1.0, 1.0), out[1].clamp(-1.0, 1.0)]);
    }
    Ok(actions)
}

#[derive(Clone, Debug)]
pub struct AttackConfig {
    pub env: EnvConfig,
    pub algorithm: Algorithm,
    pub limitation: Limitation,
    /// Number of subgames (1 ..= N+1).
    pub subgames: usize,
    pub occupancy: OccupancyMethod,
    pub lambda: f64,
    pub beta: f64,
    /// Per-victim observation success probability for static estimation;
    /// defaults to `1 - uncertainty_rate`.
    pub mu: Option<f64>,
    pub episodes: usize,
    pub meritocracy: bool,
    pub merit_cadence: usize,
    pub merit_eval_episodes: usize,
    pub pre_observation_episodes: usize,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl AttackConfig {
    pub fn new(env: EnvConfig, algorithm: Algorithm, limitation: Limitation, seed: u64) -> Self {
        let subgames = env.victims + 1;
        AttackConfig {
            env,
            algorithm,
            limitation,
            subgames,
            occupancy: OccupancyMethod::StaticEstimation,
            lambda: 0.5,
            beta: 0.9,
            mu: None,
            episodes: 1000,
            meritocracy: true,
            merit_cadence: 100,
            merit_eval_episodes: 300,
            pre_observation_episodes: 1000,
            buffer_capacity: ADVERSARY_BUFFER_CAPACITY,
            batch_size: ADVERSARY_BATCH_SIZE,
            seed,
        }
    }

    fn mu(&self) -> f64 {
        self.mu.unwrap_or(1.0 - self.limitation.uncertainty_rate)
    }
}

/// Per-episode training log record.
#[derive(Clone, Debug)]
pub struct AttackLogRow {
    pub episode: usize,
    /// Occupancy estimate per agent (current table input).
    pub occupancy: Vec<Vec<f64>>,
    /// Empirical per-episode subgame step counts per agent.
    pub episode_counts: Vec<Vec<usize>>,
    pub retained_pm: Vec<Vec<Option<f64>>>,
    pub buffer_lens: Vec<Vec<usize>>,
    pub critic_loss: f64,
    pub actor_loss: f64,
}

pub struct AttackResult {
    pub set: SubpolicySet,
    pub log: Vec<AttackLogRow>,
    pub wall_clock_secs: f64,
    /// Online learners at the end of training (for resuming / inspection).
    pub learners: Vec<Vec<AgentLearner>>,
}

/// Live attack-training state, driven one episode at a time.
///
/// The victim is usually a single frozen team; a pool of teams (uniform pick
/// per episode) models the policy-ensemble defense. Pool picks come from
/// their own substream and are only drawn when the pool has more than one
/// member, so the single-victim case is byte-identical to a fixed victim.
pub struct AttackRun<'a> {
    pub config: AttackConfig,
    env: Env,
    partition: SubgamePartition,
    victim_pool: Vec<Vec<&'a MlpParams>>,
    /// Online learners, `[agent][subgame]`.
    pub learners: Vec<Vec<AgentLearner>>,
    pub retained: Vec<Vec<RetainedSubpolicy>>,
    buffers: BufferSet,
    occupancy: Vec<OccupancyVector>,
    tables: Vec<DisseminationTable>,
    env_rng: RngStream,
    mask_rng: RngStream,
    explore_rng: RngStream,
    sample_rng: RngStream,
    pick_rng: RngStream,
    coin_rngs: Vec<RngStream>,
    merit_counter: u64,
    episode: usize,
    pub log: Vec<AttackLogRow>,
}

impl<'a> AttackRun<'a> {
    pub fn new(config: AttackConfig, victim: Vec<&'a MlpParams>) -> Result<Self> {
        AttackRun::with_victim_pool(config, vec![victim])
    }

    pub fn with_victim_pool(
        config: AttackConfig,
        victim_pool: Vec<Vec<&'a MlpParams>>,
    ) -> Result<Self> {
        if config.episodes < 1 {
            return Err(Error::contract("attack budget must be at least one episode"));
        }
        config.limitation.validate()?;
        let env = Env::new(config.env.clone())?;
        if victim_pool.is_empty() {
            return Err(Error::contract("victim pool must not be empty"));
        }
        for victim in &victim_pool {
            if victim.len() != env.config.victims {
                return Err(Error::dims(env.config.victims, victim.len(), "victim actors"));
            }
            for (j, actor) in victim.iter().enumerate() {
                let expected = env.obs_dim(Side::Victim, j);
                if actor.in_dim != expected {
                    return Err(Error::dims(expected, actor.in_dim, format!("victim actor {j}")));
                }
            }
        }
        let partition = SubgamePartition::new(env.config.victims, config.subgames)?;
        let m = env.config.adversaries;
        let adv_dims: Vec<usize> = (0..m).map(|i| env.obs_dim(Side::Adversary, i)).collect();

        let learners: Vec<Vec<AgentLearner>> = (0..m)
            .map(|i| {
                (0..config.subgames)
                    .map(|k| {
                        let mut rng = stream(config.seed, "init-adv", net_index(i, k));
                        AgentLearner::new(config.algorithm, i, &adv_dims, &mut rng)
                    })
                    .collect()
            })
            .collect();
        let retained = learners
            .iter()
            .map(|subs| {
                subs.iter()
                    .map(|l| RetainedSubpolicy {
                        actor: l.actor.clone(),
                        pm: None,
                    })
                    .collect()
            })
            .collect();
        let buffers = BufferSet::new(m, config.subgames, config.buffer_capacity, config.batch_size);

        let mut run = AttackRun {
            env_rng: stream(config.seed, "env", 0),
            mask_rng: stream(config.seed, "mask", 0),
            explore_rng: stream(config.seed, "explore", 0),
            sample_rng: stream(config.seed, "sample", 0),
            pick_rng: stream(config.seed, "ensemble-pick", 0),
            coin_rngs: (0..m).map(|i| stream(config.seed, "coin", i as u64)).collect(),
            occupancy: vec![OccupancyVector::uniform(config.subgames, config.occupancy); m],
            tables: vec![DisseminationTable::identity(config.subgames); m],
            merit_counter: 0,
            episode: 0,
            log: Vec::new(),
            config,
            env,
            partition,
            victim_pool,
            learners,
            retained,
            buffers,
        };
        run.init_occupancy()?;
        Ok(run)
    }

    fn pick_victim(&mut self) -> Vec<&'a MlpParams> {
        if self.victim_pool.len() == 1 {
            self.victim_pool[0].clone()
        } else {
            use rand::Rng;
            let idx = self.pick_rng.gen_range(0..self.victim_pool.len());
            self.victim_pool[idx].clone()
        }
    }

    pub fn env(&self) -> &Env {
        &self.env
    }

    pub fn partition(&self) -> &SubgamePartition {
        &self.partition
    }

    pub fn occupancy(&self, agent: usize) -> &OccupancyVector {
        &self.occupancy[agent]
    }

    pub fn table(&self, agent: usize) -> &DisseminationTable {
        &self.tables[agent]
    }

    pub fn buffers(&self) -> &BufferSet {
        &self.buffers
    }

    fn init_occupancy(&mut self) -> Result<()> {
        match self.config.occupancy {
            OccupancyMethod::StaticEstimation => {
                let fine = occupancy_static_estimation(self.env.config.victims, self.config.mu())?;
                let coarse = aggregate_to_partition(&fine, &self.partition);
                for or in self.occupancy.iter_mut() {
                    *or = coarse.clone();
                }
            }
            OccupancyMethod::StaticObservation => {
                // Pre-observation phase on separate substreams: play with the
                // initial subpolicies and count subgame occupancy only.
                let m = self.env.config.adversaries;
                let mut counts = vec![vec![0u64; self.config.subgames]; m];
                let mut env_rng = stream(self.config.seed, "preobs-env", 0);
                let mut mask_rng = stream(self.config.seed, "preobs-mask", 0);
                let mut explore_rng = stream(self.config.seed, "preobs-explore", 0);
                for _ in 0..self.config.pre_observation_episodes {
                    let victim = self.pick_victim();
                    let mut actor = AdversaryActor::SubgameLearners {
                        grid: &self.learners,
                        explore: true,
                    };
                    let record = run_episode(
                        &self.env,
                        &self.config.limitation,
                        &self.partition,
                        &mut actor,
                        &VictimActor::frozen(victim),
                        &mut env_rng,
                        &mut mask_rng,
                        &mut explore_rng,
                        EpisodeOptions::default(),
                    )?;
                    for (i, per_agent) in record.subgame_counts.iter().enumerate() {
                        for (k, c) in per_agent.iter().enumerate() {
                            counts[i][k] += *c as u64;
                        }
                    }
                }
                for (i, c) in counts.iter().enumerate() {
                    self.occupancy[i] = occupancy_static_observation(c)?;
                }
            }
            OccupancyMethod::DynamicObservation => {
                // Starts uniform; updated after every episode.
            }
        }
        for i in 0..self.env.config.adversaries {
            self.tables[i] = build_dissemination_table(&self.occupancy[i], self.config.lambda);
        }
        Ok(())
    }

    /// Interact for one episode, route every transition, and (for dynamic
    /// observation) refresh occupancy estimates and tables.
    pub fn interaction_episode(&mut self) -> Result<()> {
        let victim = self.pick_victim();
        let mut actor = AdversaryActor::SubgameLearners {
            grid: &self.learners,
            explore: true,
        };
        let record = run_episode(
            &self.env,
            &self.config.limitation,
            &self.partition,
            &mut actor,
            &VictimActor::frozen(victim),
            &mut self.env_rng,
            &mut self.mask_rng,
            &mut self.explore_rng,
            EpisodeOptions {
                collect_adversary: true,
                ..EpisodeOptions::default()
            },
        )?;
        for (i, transitions) in record.adversary_transitions.into_iter().enumerate() {
            for t in transitions {
                route_transition(t, &self.tables[i], &mut self.buffers, i, &mut self.coin_rngs[i]);
            }
        }
        if self.config.occupancy == OccupancyMethod::DynamicObservation {
            for i in 0..self.env.config.adversaries {
                self.occupancy[i] = occupancy_dynamic_observation(
                    &self.occupancy[i],
                    &record.subgame_counts[i],
                    self.env.config.episode_steps,
                    self.config.beta,
                );
                self.tables[i] = build_dissemination_table(&self.occupancy[i], self.config.lambda);
            }
        }
        self.log.push(AttackLogRow {
            episode: self.episode,
            occupancy: self.occupancy.iter().map(|o| o.values.clone()).collect(),
            episode_counts: record.subgame_counts,
            retained_pm: self
                .retained
                .iter()
                .map(|subs| subs.iter().map(|s| s.pm).collect())
                .collect(),
            buffer_lens: (0..self.env.config.adversaries)
                .map(|i| self.buffers.lens(i))
                .collect(),
            critic_loss: f64::NAN,
            actor_loss: f64::NAN,
        });
        self.episode += 1;
        Ok(())
    }

    /// One gradient step per (agent, subgame) whose buffer holds a batch.
    /// MADDPG teammate targets come from the same subgame's learners, frozen
    /// at round start. Returns which pairs were updated.
    pub fn update_subpolicies(&mut self) -> Result<Vec<(usize, usize)>> {
        let m = self.env.config.adversaries;
        let subs = self.config.subgames;
        let target_snapshots: Vec<Vec<MlpParams>> = (0..subs)
            .map(|k| (0..m).map(|i| self.learners[i][k].actor_target.clone()).collect())
            .collect();
        let mut updated = Vec::new();
        let mut critic_loss = 0.0;
        let mut actor_loss = 0.0;
        for i in 0..m {
            for k in 0..subs {
                let Some(indices) = self.buffers.get(i, k).sample_indices(&mut self.sample_rng)
                else {
                    continue;
                };
                let buffer = self.buffers.get(i, k);
                let batch: Vec<&crate::learner::Transition> =
                    indices.iter().map(|idx| buffer.get(*idx)).collect();
                let report = self.learners[i][k].update(&batch, &target_snapshots[k])?;
                critic_loss += report.critic_loss;
                actor_loss += report.actor_loss;
                updated.push((i, k));
            }
        }
        if let Some(row) = self.log.last_mut() {
            if !updated.is_empty() {
                row.critic_loss = critic_loss / updated.len() as f64;
                row.actor_loss = actor_loss / updated.len() as f64;
            }
        }
        Ok(updated)
    }

    /// One meritocracy round: per (agent, subgame), a single update produces
    /// the candidate, the candidate is substituted into the retained
    /// combination, evaluated, and retained only on strict improvement
    /// (the zero score wins immediately).
    ///
    /// Every round re-evaluates a combo on the same fixed seed grid (common
    /// random numbers), so stored incumbent scores stay comparable with fresh
    /// candidate scores instead of rewarding lucky evaluation episodes.
    pub fn train_subpolicies(&mut self) -> Result<()> {
        let updated = self.update_subpolicies()?;
        for (i, k) in updated {
            let candidate = self.learners[i][k].actor.clone();
            let mut grid: Vec<Vec<&MlpParams>> = self
                .retained
                .iter()
                .map(|subs| subs.iter().map(|s| &s.actor).collect())
                .collect();
            grid[i][k] = &candidate;
            let combo = (i * self.config.subgames + k) as u64;
            let eval_seed = child_seed(self.config.seed, "merit", combo);
            self.merit_counter += 1;
            let agg = evaluate_pool_core(
                &self.env,
                &self.config.limitation,
                &self.partition,
                &EvalAdversary::Combined(grid),
                &self.victim_pool,
                self.config.merit_eval_episodes,
                eval_seed,
            )?;
            let pm = harmonic_mean_pm(agg.cr(), agg.cf());
            let incumbent = &mut self.retained[i][k];
            if meritocracy_wins(pm, incumbent.pm) {
                incumbent.actor = candidate;
                incumbent.pm = Some(pm);
            }
            if let Some(row) = self.log.last_mut() {
                row.retained_pm[i][k] = self.retained[i][k].pm;
            }
        }
        Ok(())
    }

    /// Drive one full training episode: interaction, then either a plain
    /// update or (on the cadence) a meritocracy round.
    pub fn step_episode(&mut self) -> Result<()> {
        self.interaction_episode()?;
        let merit_due =
            self.config.meritocracy && self.episode % self.config.merit_cadence == 0;
        if merit_due {
            self.train_subpolicies()?;
        } else {
            self.update_subpolicies()?;
        }
        Ok(())
    }

    pub fn episodes_done(&self) -> usize {
        self.episode
    }

    /// Final artifact. With meritocracy the retained pool is returned; without
    /// it the online subpolicies are.
    pub fn into_result(mut self, wall_clock_secs: f64) -> AttackResult {
        if !self.config.meritocracy {
            for (i, subs) in self.retained.iter_mut().enumerate() {
                for (k, sub) in subs.iter_mut().enumerate() {
                    sub.actor = self.learners[i][k].actor.clone();
                    sub.pm = None;
                }
            }
        }
        AttackResult {
            set: SubpolicySet {
                algorithm: self.config.algorithm,
                partition: self.partition,
                agents: self.retained,
            },
            log: self.log,
            wall_clock_secs,
            learners: self.learners,
        }
    }
}

/// Train a subgame-decomposed adversarial policy against a frozen victim.
pub fn run_attack(config: &AttackConfig, victim: &[MlpParams]) -> Result<AttackResult> {
    let start = Instant::now();
    let mut run = AttackRun::new(config.clone(), victim.iter().collect())?;
    for _ in 0..config.episodes {
        run.step_episode()?;
    }
    Ok(run.into_result(start.elapsed().as_secs_f64()))
}

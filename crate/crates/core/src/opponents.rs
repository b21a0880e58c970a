//! Comparison attackers and the victim-production pipeline.
//!
//! * Heuristic baseline: fixed speed and direction, resampled uniformly on
//!   the unit circle after a collision.
//! * Self-play: both teams learn from scratch, alternating team updates every
//!   episode; the trained victim team is the artifact other runs attack.
//! * Victim-play: a single adversary policy trained against a frozen victim —
//!   exactly the one-subgame attack with meritocracy off, and the two code
//!   paths must produce bit-identical parameters under equal seeds.

use crate::engine::{Env, EnvConfig, Side};
use crate::error::{Error, Result};
use crate::learner::{
    AgentLearner, Algorithm, MlpParams, ReplayBuffer, ADVERSARY_BATCH_SIZE,
    ADVERSARY_BUFFER_CAPACITY, VICTIM_BATCH_SIZE, VICTIM_BUFFER_CAPACITY,
};
use crate::observe::{Limitation, SubgamePartition};
use crate::rng::{net_index, stream, RngStream};
use crate::rollout::{run_episode, AdversaryActor, EpisodeOptions, VictimActor};
use rand::Rng;
use std::time::Instant;

/// Fixed-direction baseline policy for the adversary team.
#[derive(Clone, Debug)]
pub struct HeuristicPolicy {
    pub directions: Vec<[f64; 2]>,
    pub speed_scale: f64,
}

impl HeuristicPolicy {
    pub fn new(agents: usize, speed_scale: f64, rng: &mut RngStream) -> Self {
        let directions = (0..agents).map(|_| Self::sample_direction(rng)).collect();
        HeuristicPolicy {
            directions,
            speed_scale,
        }
    }

    fn sample_direction(rng: &mut RngStream) -> [f64; 2] {
        let theta = rng.gen::<f64>() * std::f64::consts::TAU;
        [theta.cos(), theta.sin()]
    }

    /// Constant action unless the agent collided last step, in which case the
    /// direction is resampled first.
    pub fn act(&mut self, agent: usize, collided_last_step: bool, rng: &mut RngStream) -> [f64; 2] {
        if collided_last_step {
            self.directions[agent] = Self::sample_direction(rng);
        }
        let d = self.directions[agent];
        [self.speed_scale * d[0], self.speed_scale * d[1]]
    }
}

/// Shared knobs for single-policy adversary training (victim-play) and
/// two-team training (self-play).
#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub env: EnvConfig,
    pub algorithm: Algorithm,
    /// Partial observability applied to the adversary side. Self-play trains
    /// with full observability and ignores this field.
    pub limitation: Limitation,
    pub episodes: usize,
    pub adversary_buffer: usize,
    pub adversary_batch: usize,
    pub victim_buffer: usize,
    pub victim_batch: usize,
    /// Gradient steps per victim-team update round in self-play. Desk-scale
    /// budgets need more than one step per round for the victims to become
    /// competent pursuers; each step samples a fresh batch.
    pub victim_update_steps: usize,
    /// Update both teams every episode instead of alternating.
    pub selfplay_simultaneous: bool,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(env: EnvConfig, algorithm: Algorithm, limitation: Limitation, seed: u64) -> Self {
        TrainConfig {
            env,
            algorithm,
            limitation,
            episodes: 1000,
            adversary_buffer: ADVERSARY_BUFFER_CAPACITY,
            adversary_batch: ADVERSARY_BATCH_SIZE,
            victim_buffer: VICTIM_BUFFER_CAPACITY,
            victim_batch: VICTIM_BATCH_SIZE,
            victim_update_steps: 4,
            selfplay_simultaneous: false,
            seed,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainLogRow {
    pub episode: usize,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub adversary_return: f64,
    pub victim_return: f64,
    pub collisions: usize,
}

pub struct VictimplayResult {
    pub learners: Vec<AgentLearner>,
    pub log: Vec<TrainLogRow>,
    pub wall_clock_secs: f64,
}

/// Train one adversary policy per agent against a frozen victim: all
/// transitions in one buffer per agent, no subgames, no dissemination, no
/// meritocracy.
pub fn train_victimplay(config: &TrainConfig, victim: &[MlpParams]) -> Result<VictimplayResult> {
    let start = Instant::now();
    if config.episodes < 1 {
        return Err(Error::contract("training budget must be at least one episode"));
    }
    config.limitation.validate()?;
    let env = Env::new(config.env.clone())?;
    if victim.len() != env.config.victims {
        return Err(Error::dims(env.config.victims, victim.len(), "victim actors"));
    }
    let m = env.config.adversaries;
    let partition = SubgamePartition::new(env.config.victims, 1)?;
    let adv_dims: Vec<usize> = (0..m).map(|i| env.obs_dim(Side::Adversary, i)).collect();
    let mut learners: Vec<AgentLearner> = (0..m)
        .map(|i| {
            let mut rng = stream(config.seed, "init-adv", net_index(i, 0));
            AgentLearner::new(config.algorithm, i, &adv_dims, &mut rng)
        })
        .collect();
    let mut buffers: Vec<ReplayBuffer> = (0..m)
        .map(|_| ReplayBuffer::new(config.adversary_buffer, config.adversary_batch))
        .collect();
    let victim_actors: Vec<&MlpParams> = victim.iter().collect();

    let mut env_rng = stream(config.seed, "env", 0);
    let mut mask_rng = stream(config.seed, "mask", 0);
    let mut explore_rng = stream(config.seed, "explore", 0);
    let mut sample_rng = stream(config.seed, "sample", 0);
    let mut log = Vec::with_capacity(config.episodes);

    for episode in 0..config.episodes {
        let mut actor = AdversaryActor::Learners {
            learners: &learners,
            explore: true,
        };
        let record = run_episode(
            &env,
            &config.limitation,
            &partition,
            &mut actor,
            &VictimActor::frozen(victim_actors.clone()),
            &mut env_rng,
            &mut mask_rng,
            &mut explore_rng,
            EpisodeOptions {
                collect_adversary: true,
                ..EpisodeOptions::default()
            },
        )?;
        for (i, transitions) in record.adversary_transitions.into_iter().enumerate() {
            for t in transitions {
                buffers[i].push(t);
            }
        }
        let targets: Vec<MlpParams> = learners.iter().map(|l| l.actor_target.clone()).collect();
        let mut critic_loss = 0.0;
        let mut actor_loss = 0.0;
        let mut updates = 0usize;
        for (i, learner) in learners.iter_mut().enumerate() {
            let Some(indices) = buffers[i].sample_indices(&mut sample_rng) else {
                continue;
            };
            let batch: Vec<&crate::learner::Transition> =
                indices.iter().map(|idx| buffers[i].get(*idx)).collect();
            let report = learner.update(&batch, &targets)?;
            critic_loss += report.critic_loss;
            actor_loss += report.actor_loss;
            updates += 1;
        }
        log.push(TrainLogRow {
            episode,
            critic_loss: if updates > 0 { critic_loss / updates as f64 } else { f64::NAN },
            actor_loss: if updates > 0 { actor_loss / updates as f64 } else { f64::NAN },
            adversary_return: record.adversary_return,
            victim_return: record.victim_return,
            collisions: record.collisions,
        });
    }
    Ok(VictimplayResult {
        learners,
        log,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

pub struct SelfplayResult {
    pub adversary: Vec<AgentLearner>,
    pub victim: Vec<AgentLearner>,
    pub log: Vec<TrainLogRow>,
    pub wall_clock_secs: f64,
}

/// Train both teams from scratch with full observability. Team updates
/// alternate per episode (adversary on even episodes, victim on odd). The
/// victim team shares one replay buffer of joint transitions; each victim
/// agent samples its own batches from it.
///
/// `on_checkpoint` fires every `episodes / 100` episodes (at least every
/// episode for tiny budgets) with the current victim learners.
pub fn train_selfplay(
    config: &TrainConfig,
    mut on_checkpoint: Option<&mut dyn FnMut(usize, &[AgentLearner]) -> Result<()>>,
) -> Result<SelfplayResult> {
    let start = Instant::now();
    if config.episodes < 1 {
        return Err(Error::contract("training budget must be at least one episode"));
    }
    let env = Env::new(config.env.clone())?;
    let m = env.config.adversaries;
    let n = env.config.victims;
    let partition = SubgamePartition::new(n, 1)?;
    let limitation = Limitation::none();
    let adv_dims: Vec<usize> = (0..m).map(|i| env.obs_dim(Side::Adversary, i)).collect();
    let vic_dims: Vec<usize> = (0..n).map(|j| env.obs_dim(Side::Victim, j)).collect();

    let mut adversary: Vec<AgentLearner> = (0..m)
        .map(|i| {
            let mut rng = stream(config.seed, "init-adv", net_index(i, 0));
            AgentLearner::new(config.algorithm, i, &adv_dims, &mut rng)
        })
        .collect();
    let mut victim: Vec<AgentLearner> = (0..n)
        .map(|j| {
            let mut rng = stream(config.seed, "init-victim", j as u64);
            AgentLearner::new(config.algorithm, j, &vic_dims, &mut rng)
        })
        .collect();

    let mut adv_buffers: Vec<ReplayBuffer> = (0..m)
        .map(|_| ReplayBuffer::new(config.adversary_buffer, config.adversary_batch))
        .collect();
    let mut victim_buffer = ReplayBuffer::new(config.victim_buffer, config.victim_batch);

    let mut env_rng = stream(config.seed, "env", 0);
    let mut mask_rng = stream(config.seed, "mask", 0);
    let mut explore_rng = stream(config.seed, "explore", 0);
    let mut sample_rng = stream(config.seed, "sample", 0);
    let checkpoint_cadence = (config.episodes / 100).max(1);
    let mut log = Vec::with_capacity(config.episodes);

    for episode in 0..config.episodes {
        let record = {
            let mut actor = AdversaryActor::Learners {
                learners: &adversary,
                explore: true,
            };
            let victim_actor = VictimActor::training(&victim);
            run_episode(
                &env,
                &limitation,
                &partition,
                &mut actor,
                &victim_actor,
                &mut env_rng,
                &mut mask_rng,
                &mut explore_rng,
                EpisodeOptions {
                    collect_adversary: true,
                    collect_victim: true,
                    ..EpisodeOptions::default()
                },
            )?
        };
        for (i, transitions) in record.adversary_transitions.into_iter().enumerate() {
            for t in transitions {
                adv_buffers[i].push(t);
            }
        }
        for t in record.victim_transitions {
            victim_buffer.push(t);
        }

        let mut critic_loss = f64::NAN;
        let mut actor_loss = f64::NAN;
        let adversary_turn = config.selfplay_simultaneous || episode % 2 == 0;
        let victim_turn = config.selfplay_simultaneous || episode % 2 == 1;
        if adversary_turn {
            let targets: Vec<MlpParams> =
                adversary.iter().map(|l| l.actor_target.clone()).collect();
            let mut cl = 0.0;
            let mut al = 0.0;
            let mut updates = 0usize;
            for (i, learner) in adversary.iter_mut().enumerate() {
                let Some(indices) = adv_buffers[i].sample_indices(&mut sample_rng) else {
                    continue;
                };
                let batch: Vec<&crate::learner::Transition> =
                    indices.iter().map(|idx| adv_buffers[i].get(*idx)).collect();
                let report = learner.update(&batch, &targets)?;
                cl += report.critic_loss;
                al += report.actor_loss;
                updates += 1;
            }
            if updates > 0 {
                critic_loss = cl / updates as f64;
                actor_loss = al / updates as f64;
            }
        }
        if victim_turn {
            let mut cl = 0.0;
            let mut al = 0.0;
            let mut updates = 0usize;
            for _ in 0..config.victim_update_steps.max(1) {
                let targets: Vec<MlpParams> =
                    victim.iter().map(|l| l.actor_target.clone()).collect();
                for learner in victim.iter_mut() {
                    let Some(indices) = victim_buffer.sample_indices(&mut sample_rng) else {
                        continue;
                    };
                    let batch: Vec<&crate::learner::Transition> =
                        indices.iter().map(|idx| victim_buffer.get(*idx)).collect();
                    let report = learner.update(&batch, &targets)?;
                    cl += report.critic_loss;
                    al += report.actor_loss;
                    updates += 1;
                }
            }
            if updates > 0 {
                critic_loss = cl / updates as f64;
                actor_loss = al / updates as f64;
            }
        }

        if (episode + 1) % checkpoint_cadence == 0 {
            if let Some(cb) = on_checkpoint.as_mut() {
                cb(episode + 1, &victim)?;
            }
        }
        log.push(TrainLogRow {
            episode,
            critic_loss,
            actor_loss,
            adversary_return: record.adversary_return,
            victim_return: record.victim_return,
            collisions: record.collisions,
        });
    }
    Ok(SelfplayResult {
        adversary,
        victim,
        log,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

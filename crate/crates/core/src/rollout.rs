//! Shared episode runner.
//!
//! Every training and evaluation path steps episodes through this module so
//! the order of random draws is identical everywhere: per step, adversary
//! masks (agent order), adversary action noise, victim action noise, then the
//! physics step. The degenerate-attack equivalence and the two-process
//! determinism checks rely on this single code path.

use crate::engine::{CollisionEvent, Env, Side, WorldState};
use crate::error::Result;
use crate::learner::{AgentLearner, MlpParams, Transition};
use crate::observe::{apply_mask, classify_subgame, make_mask, Limitation, Mask, SubgamePartition};
use crate::opponents::HeuristicPolicy;
use crate::rng::{standard_normal, RngStream};

/// How the victim team acts during an episode.
pub struct VictimActor<'a> {
    pub actors: Vec<&'a MlpParams>,
    pub explore: bool,
    pub noise_std: f64,
}

impl<'a> VictimActor<'a> {
    pub fn frozen(actors: Vec<&'a MlpParams>) -> Self {
        VictimActor {
            actors,
            explore: false,
            noise_std: 0.0,
        }
    }

    pub fn training(learners: &'a [AgentLearner]) -> Self {
        VictimActor {
            actors: learners.iter().map(|l| &l.actor).collect(),
            explore: true,
            noise_std: learners.first().map(|l| l.noise_std).unwrap_or(0.01),
        }
    }
}

/// How the adversary team acts during an episode.
pub enum AdversaryActor<'a> {
    /// One online learner per agent (victim-play, self-play).
    Learners {
        learners: &'a [AgentLearner],
        explore: bool,
    },
    /// Per (agent, subgame) learner grid dispatched by each agent's own mask.
    SubgameLearners {
        grid: &'a [Vec<AgentLearner>],
        explore: bool,
    },
    /// Frozen per-agent actors.
    Actors(Vec<&'a MlpParams>),
    /// Frozen per (agent, subgame) actors dispatched by mask.
    CombinedActors(Vec<Vec<&'a MlpParams>>),
    /// Fixed-direction baseline with resampling after collisions.
    Heuristic(&'a mut HeuristicPolicy),
    /// Test hook.
    Scripted(&'a mut dyn FnMut(&Env, &WorldState, usize) -> [f64; 2]),
}

/// Second-hidden-layer activations of one victim actor at one step.
#[derive(Clone, Debug)]
pub struct ActivationRow {
    pub step: usize,
    pub agent: usize,
    pub values: Vec<f64>,
}

#[derive(Default)]
pub struct EpisodeOptions<'a> {
    pub collect_adversary: bool,
    pub collect_victim: bool,
    pub activations: Option<&'a mut Vec<ActivationRow>>,
    /// Trajectory sink and the episode index to stamp on each line.
    pub trajectory: Option<(&'a mut String, usize)>,
}

#[derive(Clone, Debug, Default)]
pub struct EpisodeRecord {
    /// Per adversary agent, one transition per step (when collected).
    pub adversary_transitions: Vec<Vec<Transition>>,
    /// Joint victim-team transitions (when collected).
    pub victim_transitions: Vec<Transition>,
    pub events: Vec<CollisionEvent>,
    pub collisions: usize,
    pub caught: bool,
    /// Per adversary agent, how many steps were classified into each subgame.
    pub subgame_counts: Vec<Vec<usize>>,
    pub adversary_return: f64,
    pub victim_return: f64,
}

struct StepView {
    masks: Vec<Mask>,
    masked_obs: Vec<Vec<f64>>,
    subgames: Vec<usize>,
    victim_obs: Vec<Vec<f64>>,
}

fn observe_all(
    env: &Env,
    state: &WorldState,
    limitation: &Limitation,
    partition: &SubgamePartition,
    mask_rng: &mut RngStream,
) -> Result<StepView> {
    let m = env.config.adversaries;
    let n = env.config.victims;
    let mut masks = Vec::with_capacity(m);
    let mut masked_obs = Vec::with_capacity(m);
    let mut subgames = Vec::with_capacity(m);
    for i in 0..m {
        let full = env.observation(state, Side::Adversary, i);
        let mask = make_mask(env, state, i, limitation, mask_rng);
        masked_obs.push(apply_mask(&full, &mask)?);
        subgames.push(classify_subgame(&mask, partition));
        masks.push(mask);
    }
    let victim_obs = (0..n)
        .map(|j| env.observation(state, Side::Victim, j))
        .collect();
    Ok(StepView {
        masks,
        masked_obs,
        subgames,
        victim_obs,
    })
}

/// Run one fixed-length episode. All randomness comes from the three streams.
pub fn run_episode(
    env: &Env,
    limitation: &Limitation,
    partition: &SubgamePartition,
    adversary: &mut AdversaryActor,
    victim: &VictimActor,
    env_rng: &mut RngStream,
    mask_rng: &mut RngStream,
    explore_rng: &mut RngStream,
    mut options: EpisodeOptions,
) -> Result<EpisodeRecord> {
    let m = env.config.adversaries;
    let steps = env.config.episode_steps;
    let mut state = env.reset(env_rng);
    if let Some((sink, episode)) = options.trajectory.as_mut() {
        env.dump_lines(*episode, &state, sink);
    }

    let mut record = EpisodeRecord {
        subgame_counts: vec![vec![0; partition.subgames()]; m],
        adversary_transitions: vec![Vec::new(); m],
        ..EpisodeRecord::default()
    };
    let mut collided_last = vec![false; m];
    let mut view = observe_all(env, &state, limitation, partition, mask_rng)?;

    for t in 0..steps {
        for (i, k) in view.subgames.iter().enumerate() {
            record.subgame_counts[i][*k] += 1;
        }

        // Adversary actions (noise draws in agent order).
        let mut adv_actions = Vec::with_capacity(m);
        for i in 0..m {
            let action = match adversary {
                AdversaryActor::Learners { learners, explore } => {
                    learners[i].act(&view.masked_obs[i], *explore, explore_rng)?
                }
                AdversaryActor::SubgameLearners { grid, explore } => {
                    grid[i][view.subgames[i]].act(&view.masked_obs[i], *explore, explore_rng)?
                }
                AdversaryActor::Actors(actors) => {
                    let out = actors[i].forward(&view.masked_obs[i])?;
                    [out[0].clamp(-1.0, 1.0), out[1].clamp(-1.0, 1.0)]
                }
                AdversaryActor::CombinedActors(grid) => {
                    let out = grid[i][view.subgames[i]].forward(&view.masked_obs[i])?;
                    [out[0].clamp(-1.0, 1.0), out[1].clamp(-1.0, 1.0)]
                }
                AdversaryActor::Heuristic(policy) => {
                    policy.act(i, collided_last[i], explore_rng)
                }
                AdversaryActor::Scripted(f) => f(env, &state, i),
            };
            adv_actions.push(action);
        }

        // Victim actions (noise draws after the adversary's).
        let mut vic_actions = Vec::with_capacity(victim.actors.len());
        for (j, actor) in victim.actors.iter().enumerate() {
            let cache = actor.forward_cached(&view.victim_obs[j])?;
            if let Some(rows) = options.activations.as_mut() {
                rows.push(ActivationRow {
                    step: t,
                    agent: j,
                    values: cache.h2.clone(),
                });
            }
            let mut action = [cache.output[0], cache.output[1]];
            if victim.explore {
                for a in action.iter_mut() {
                    *a += victim.noise_std * standard_normal(explore_rng);
                }
            }
            for a in action.iter_mut() {
                *a = a.clamp(-1.0, 1.0);
            }
            vic_actions.push(action);
        }

        let outcome = env.step(
            &state,
            &crate::engine::JointAction {
                adversary: adv_actions.clone(),
                victim: vic_actions.clone(),
            },
        )?;
        state = outcome.state;
        if let Some((sink, episode)) = options.trajectory.as_mut() {
            env.dump_lines(*episode, &state, sink);
        }

        let next_view = observe_all(env, &state, limitation, partition, mask_rng)?;

        if options.collect_adversary {
            for i in 0..m {
                record.adversary_transitions[i].push(Transition {
                    obs: view.masked_obs.clone(),
                    actions: adv_actions.clone(),
                    rewards: outcome.adversary_rewards.clone(),
                    next_obs: next_view.masked_obs.clone(),
                    mask: Some(view.masks[i].clone()),
                    subgame: view.subgames[i],
                    disseminated: false,
                });
            }
        }
        if options.collect_victim {
            record.victim_transitions.push(Transition {
                obs: view.victim_obs.clone(),
                actions: vic_actions.clone(),
                rewards: outcome.victim_rewards.clone(),
                next_obs: next_view.victim_obs.clone(),
                mask: None,
                subgame: 0,
                disseminated: false,
            });
        }

        for flag in collided_last.iter_mut() {
            *flag = false;
        }
        for ev in &outcome.events {
            collided_last[ev.prey] = true;
        }
        record.collisions += outcome.events.len();
        record.events.extend(outcome.events.iter().copied());
        record.adversary_return += outcome.adversary_rewards.iter().sum::<f64>();
        record.victim_return += outcome.victim_rewards.iter().sum::<f64>();

        view = next_view;
    }

    record.caught = !record.events.is_empty();
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::EnvConfig;
    use crate::learner::Algorithm;
    use crate::rng::stream;

    #[test]
    fn episode_runs_exactly_t_steps_and_is_deterministic() {
        let env = Env::new(EnvConfig::predator_prey(1, 3)).unwrap();
        let partition = SubgamePartition::fine(3);
        let limitation = Limitation::uncertainty(0.25);
        let victim_dims: Vec<usize> = (0..3).map(|j| env.obs_dim(Side::Victim, j)).collect();
        let victims: Vec<AgentLearner> = (0..3)
            .map(|j| AgentLearner::new(Algorithm::Ddpg, j, &victim_dims, &mut stream(5, "vi", j as u64)))
            .collect();
        let victim_actors: Vec<&MlpParams> = victims.iter().map(|l| &l.actor).collect();
        let adv_dims = vec![env.obs_dim(Side::Adversary, 0)];
        let learners: Vec<AgentLearner> = vec![AgentLearner::new(
            Algorithm::Ddpg,
            0,
            &adv_dims,
            &mut stream(5, "ai", 0),
        )];

        let run = || {
            let mut adversary = AdversaryActor::Learners {
                learners: &learners,
                explore: true,
            };
            run_episode(
                &env,
                &limitation,
                &partition,
                &mut adversary,
                &VictimActor::frozen(victim_actors.clone()),
                &mut stream(5, "env", 0),
                &mut stream(5, "mask", 0),
                &mut stream(5, "explore", 0),
                EpisodeOptions {
                    collect_adversary: true,
                    collect_victim: true,
                    ..EpisodeOptions::default()
                },
            )
            .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.adversary_transitions[0].len(), 25);
        assert_eq!(a.victim_transitions.len(), 25);
        assert_eq!(a.subgame_counts[0].iter().sum::<usize>(), 25);
        assert_eq!(a.collisions, b.collisions);
        for (x, y) in a.adversary_transitions[0].iter().zip(&b.adversary_transitions[0]) {
            assert_eq!(x.obs, y.obs);
            assert_eq!(x.actions, y.actions);
            assert_eq!(x.rewards, y.rewards);
            assert_eq!(x.subgame, y.subgame);
        }
    }

    #[test]
    fn scripted_adversary_and_trajectory_dump() {
        let env = Env::new(EnvConfig::predator_prey(2, 2)).unwrap();
        let partition = SubgamePartition::fine(2);
        let limitation = Limitation::none();
        let victim_dims: Vec<usize> = (0..2).map(|j| env.obs_dim(Side::Victim, j)).collect();
        let victims: Vec<AgentLearner> = (0..2)
            .map(|j| AgentLearner::new(Algorithm::Ddpg, j, &victim_dims, &mut stream(6, "vi", j as u64)))
            .collect();
        let victim_actors: Vec<&MlpParams> = victims.iter().map(|l| &l.actor).collect();
        let mut script = |_: &Env, _: &WorldState, agent: usize| -> [f64; 2] {
            if agent == 0 {
                [1.0, 0.0]
            } else {
                [0.0, -1.0]
            }
        };
        let mut sink = String::new();
        let mut adversary = AdversaryActor::Scripted(&mut script);
        let record = run_episode(
            &env,
            &limitation,
            &partition,
            &mut adversary,
            &VictimActor::frozen(victim_actors),
            &mut stream(6, "env", 0),
            &mut stream(6, "mask", 0),
            &mut stream(6, "explore", 0),
            EpisodeOptions {
                trajectory: Some((&mut sink, 3)),
                ..EpisodeOptions::default()
            },
        )
        .unwrap();
        // With no limitation every step lands in the all-visible subgame.
        assert_eq!(record.subgame_counts[0][2], 25);
        let lines: Vec<&str> = sink.lines().collect();
        assert_eq!(lines.len(), 26 * env.entity_count());
        assert!(lines[0].starts_with("3,0,0,"));
    }
}

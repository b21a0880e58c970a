//! Per-agent actor-critic learner with DDPG and MADDPG update rules.
//!
//! DDPG critics see the agent's own observation and action; MADDPG critics
//! see the concatenation of the whole team's observations and actions
//! (centralized training, decentralized execution). Target networks follow
//! the online networks by exponential moving average.

use super::adam::AdamState;
use super::buffer::Transition;
use super::mlp::{ema_update, ForwardCache, Head, MlpGrads, MlpParams};
use crate::error::{Error, Result};
use crate::rng::{standard_normal, RngStream};

pub const ACTION_DIM: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    Ddpg,
    Maddpg,
}

impl Algorithm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Ddpg => "ddpg",
            Algorithm::Maddpg => "maddpg",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ddpg" => Ok(Algorithm::Ddpg),
            "maddpg" => Ok(Algorithm::Maddpg),
            other => Err(Error::contract(format!("unknown algorithm: {other}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct LossReport {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub samples: usize,
}

/// Actor, critic, their EMA targets, and Adam state for one team member.
#[derive(Clone, Debug)]
pub struct AgentLearner {
    pub algorithm: Algorithm,
    pub member_index: usize,
    pub team_obs_dims: Vec<usize>,
    pub actor: MlpParams,
    pub critic: MlpParams,
    pub actor_target: MlpParams,
    pub critic_target: MlpParams,
    pub actor_opt: AdamState,
    pub critic_opt: AdamState,
    pub gamma: f64,
    pub ema_decay: f64,
    pub noise_std: f64,
}

impl AgentLearner {
    /// Initialise actor and critic with Xavier-normal weights from `rng`;
    /// targets start as copies of the online networks.
    pub fn new(
        algorithm: Algorithm,
        member_index: usize,
        team_obs_dims: &[usize],
        rng: &mut RngStream,
    ) -> Self {
        let team = team_obs_dims.len();
        assert!(member_index < team);
        let own_obs = team_obs_dims[member_index];
        let critic_in = match algorithm {
            Algorithm::Ddpg => own_obs + ACTION_DIM,
            Algorithm::Maddpg => team_obs_dims.iter().sum::<usize>() + ACTION_DIM * team,
        };
        let actor = MlpParams::xavier(own_obs, ACTION_DIM, Head::Tanh, rng);
        let critic = MlpParams::xavier(critic_in, 1, Head::Linear, rng);
        let actor_target = actor.clone();
        let critic_target = critic.clone();
        let actor_opt = AdamState::new(&actor);
        let critic_opt = AdamState::new(&critic);
        AgentLearner {
            algorithm,
            member_index,
            team_obs_dims: team_obs_dims.to_vec(),
            actor,
            critic,
            actor_target,
            critic_target,
            actor_opt,
            critic_opt,
            gamma: 0.95,
            ema_decay: 0.95,
            noise_std: 0.01,
        }
    }

    pub fn critic_in_dim(&self) -> usize {
        self.critic.in_dim
    }

    /// Deterministic action from the online actor, optionally with Gaussian
    /// exploration noise (one draw per component), clipped to [-1, 1].
    pub fn act(&self, observation: &[f64], explore: bool, noise: &mut RngStream) -> Result<[f64; 2]> {
        let out = self.actor.forward(observation)?;
        let mut action = [out[0], out[1]];
        if explore {
            for a in action.iter_mut() {
                *a += self.noise_std * standard_normal(noise);
            }
        }
        for a in action.iter_mut() {
            *a = a.clamp(-1.0, 1.0);
        }
        Ok(action)
    }

    /// Scope of the critic input: which team members' slices it consumes.
    fn scope(&self) -> Vec<usize> {
        match self.algorithm {
            Algorithm::Ddpg => vec![self.member_index],
            Algorithm::Maddpg => (0..self.team_obs_dims.len()).collect(),
        }
    }

    /// Offset of this agent's own action inside the critic input.
    fn own_action_offset(&self) -> usize {
        match self.algorithm {
            Algorithm::Ddpg => self.team_obs_dims[self.member_index],
            Algorithm::Maddpg => {
                self.team_obs_dims.iter().sum::<usize>() + ACTION_DIM * self.member_index
            }
        }
    }

    fn critic_input_into(
        &self,
        obs: &[Vec<f64>],
        actions: &[[f64; 2]],
        own_action_override: Option<&[f64; 2]>,
        input: &mut Vec<f64>,
    ) -> Result<()> {
        input.clear();
        for &j in self.scope().iter() {
            if obs[j].len() != self.team_obs_dims[j] {
                return Err(Error::dims(
                    self.team_obs_dims[j],
                    obs[j].len(),
                    format!("critic obs slice for member {j}"),
                ));
            }
            input.extend_from_slice(&obs[j]);
        }
        for &j in self.scope().iter() {
            let a = if j == self.member_index {
                own_action_override.unwrap_or(&actions[j])
            } else {
                &actions[j]
            };
            input.extend_from_slice(a);
        }
        debug_assert_eq!(input.len(), self.critic.in_dim);
        Ok(())
    }

    /// Bootstrap target `y = r + gamma * Q_target(o', a')` where the next
    /// actions come from the team's target actors (own slot from this
    /// learner's own target actor).
    fn td_target(
        &self,
        t: &Transition,
        team_targets: &[MlpParams],
        scratch: &mut ForwardCache,
        input: &mut Vec<f64>,
    ) -> Result<f64> {
        let scope = self.scope();
        let mut next_actions = [[0.0f64; 2]; 8];
        debug_assert!(scope.len() <= next_actions.len());
        for (s, &j) in scope.iter().enumerate() {
            let actor = if j == self.member_index {
                &self.actor_target
            } else {
                &team_targets[j]
            };
            actor.forward_into(&t.next_obs[j], scratch)?;
            next_actions[s] = [scratch.output[0], scratch.output[1]];
        }
        input.clear();
        for &j in scope.iter() {
            input.extend_from_slice(&t.next_obs[j]);
        }
        for s in 0..scope.len() {
            input.extend_from_slice(&next_actions[s]);
        }
        self.critic_target.forward_into(input, scratch)?;
        Ok(t.rewards[self.member_index] + self.gamma * scratch.output[0])
    }

    /// Mean-squared TD error of the online critic on `batch`.
    pub fn critic_loss(&self, batch: &[&Transition], team_targets: &[MlpParams]) -> Result<f64> {
        let mut loss = 0.0;
        let mut scratch = ForwardCache::default();
        let mut input = Vec::with_capacity(self.critic.in_dim);
        for t in batch {
            let y = self.td_target(t, team_targets, &mut scratch, &mut input)?;
            self.critic_input_into(&t.obs, &t.actions, None, &mut input)?;
            self.critic.forward_into(&input, &mut scratch)?;
            let q = scratch.output[0];
            loss += (q - y) * (q - y);
        }
        Ok(loss / batch.len().max(1) as f64)
    }

    /// Critic loss and its gradients with respect to the critic parameters.
    pub fn critic_gradients(
        &self,
        batch: &[&Transition],
        team_targets: &[MlpParams],
    ) -> Result<(f64, MlpGrads)> {
        let b = batch.len() as f64;
        let mut grads = self.critic.zeros_like();
        let mut loss = 0.0;
        let mut scratch = ForwardCache::default();
        let mut cache = ForwardCache::default();
        let mut input = Vec::with_capacity(self.critic.in_dim);
        for t in batch {
            let y = self.td_target(t, team_targets, &mut scratch, &mut input)?;
            self.critic_input_into(&t.obs, &t.actions, None, &mut input)?;
            self.critic.forward_into(&input, &mut cache)?;
            let q = cache.output[0];
            loss += (q - y) * (q - y);
            let upstream = [2.0 * (q - y) / b];
            self.critic.backward_accumulate(&cache, &upstream, &mut grads);
        }
        Ok((loss / b, grads))
    }

    /// Negative mean critic value of the online actor's actions, i.e. the
    /// quantity the actor descends.
    pub fn actor_loss(&self, batch: &[&Transition]) -> Result<f64> {
        let mut total = 0.0;
        let mut scratch = ForwardCache::default();
        let mut input = Vec::with_capacity(self.critic.in_dim);
        for t in batch {
            self.actor.forward_into(&t.obs[self.member_index], &mut scratch)?;
            let a = [scratch.output[0], scratch.output[1]];
            self.critic_input_into(&t.obs, &t.actions, Some(&a), &mut input)?;
            self.critic.forward_into(&input, &mut scratch)?;
            total += scratch.output[0];
        }
        Ok(-total / batch.len().max(1) as f64)
    }

    /// Actor loss and its gradients through the frozen online critic.
    pub fn actor_gradients(&self, batch: &[&Transition]) -> Result<(f64, MlpGrads)> {
        let b = batch.len() as f64;
        let mut grads = self.actor.zeros_like();
        let mut critic_scratch = self.critic.zeros_like();
        let offset = self.own_action_offset();
        let mut total = 0.0;
        let mut actor_cache = ForwardCache::default();
        let mut critic_cache = ForwardCache::default();
        let mut input = Vec::with_capacity(self.critic.in_dim);
        for t in batch {
            self.actor.forward_into(&t.obs[self.member_index], &mut actor_cache)?;
            let a = [actor_cache.output[0], actor_cache.output[1]];
            self.critic_input_into(&t.obs, &t.actions, Some(&a), &mut input)?;
            self.critic.forward_into(&input, &mut critic_cache)?;
            total += critic_cache.output[0];
            // d(-mean q)/dq = -1/B, propagated to the critic's input, then
            // through the agent's own action slice into the actor.
            let dx = self
                .critic
                .backward_accumulate(&critic_cache, &[-1.0 / b], &mut critic_scratch);
            let upstream = [dx[offset], dx[offset + 1]];
            self.actor.backward_accumulate(&actor_cache, &upstream, &mut grads);
        }
        Ok((-total / b, grads))
    }

    /// One actor-critic update: critic Adam step toward the TD target, actor
    /// Adam step ascending the updated critic, then EMA target refresh.
    /// Empty batches are a reported no-op.
    pub fn update(&mut self, batch: &[&Transition], team_targets: &[MlpParams]) -> Result<LossReport> {
        if batch.is_empty() {
            return Ok(LossReport::default());
        }
        let (critic_loss, critic_grads) = self.critic_gradients(batch, team_targets)?;
        self.critic_opt.step(&mut self.critic, &critic_grads);
        let (actor_loss, actor_grads) = self.actor_gradients(batch)?;
        self.actor_opt.step(&mut self.actor, &actor_grads);
        ema_update(&mut self.actor_target, &self.actor, self.ema_decay);
        ema_update(&mut self.critic_target, &self.critic, self.ema_decay);
        Ok(LossReport {
            critic_loss,
            actor_loss,
            samples: batch.len(),
        })
    }
}

/// DDPG update: critic input is the agent's own observation and action.
pub fn ddpg_update(learner: &mut AgentLearner, batch: &[&Transition]) -> Result<LossReport> {
    if learner.algorithm != Algorithm::Ddpg {
        return Err(Error::contract("ddpg_update requires algorithm=ddpg"));
    }
    // Only the learner's own target actor is consulted for DDPG.
    learner.update(batch, &[])
}

/// MADDPG update: critic input concatenates the whole team's observations
/// and actions; teammate target actions come from `team_targets`.
pub fn maddpg_update(
    learner: &mut AgentLearner,
    batch: &[&Transition],
    team_targets: &[MlpParams],
) -> Result<LossReport> {
    if learner.algorithm != Algorithm::Maddpg {
        return Err(Error::contract("maddpg_update requires algorithm=maddpg"));
    }
    if team_targets.len() != learner.team_obs_dims.len() {
        return Err(Error::dims(
            learner.team_obs_dims.len(),
            team_targets.len(),
            "team target actors",
        ));
    }
    learner.update(batch, team_targets)
}

//! Deterministic 2D particle physics and the two competitive environments.
//!
//! The adversary team controls the fast preys, the victim team the slower
//! predators. `predator_prey` is the plain pursuit arena; `world_communication`
//! adds foods, a forest region, and a leader predator that relays absolute
//! prey positions to its teammates.
//!
//! Integration per movable entity and step (mass 1):
//!
//! ```text
//! v <- v * (1 - damping)
//! v <- v + (accel * action + contact_force) * dt
//! v <- clip to max_speed
//! p <- p + v * dt
//! ```
//!
//! Collision events are recorded at the end of the step: `(predator j, prey i)`
//! is an event iff `dist(i, j) < r_i + r_j`, deduplicated per pair per step.

use crate::error::{Error, Result};
use crate::rng::RngStream;
use rand::Rng;

pub type Vec2 = [f64; 2];

pub const ARENA_HALF_EXTENT: f64 = 1.0;
/// Landmarks (obstacles, foods) spawn inside the soft boundary.
pub const LANDMARK_SPAWN_EXTENT: f64 = 0.9;
/// Forest centers keep the whole square inside the arena.
pub const FOREST_SPAWN_EXTENT: f64 = 0.7;
/// Half the side length of the square forest region.
pub const FOREST_HALF_SIDE: f64 = 0.3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Predator,
    Prey,
    LeaderPredator,
    Obstacle,
    Food,
    Forest,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Adversary,
    Victim,
}

#[derive(Clone, Debug)]
pub struct EntitySpec {
    pub role: Role,
    pub radius: f64,
    pub max_speed: f64,
    pub accel: f64,
    pub collidable: bool,
    pub movable: bool,
}

impl EntitySpec {
    fn prey() -> Self {
        EntitySpec {
            role: Role::Prey,
            radius: 0.05,
            max_speed: 1.3,
            accel: 4.0,
            collidable: true,
            movable: true,
        }
    }

    fn predator(leader: bool) -> Self {
        EntitySpec {
            role: if leader { Role::LeaderPredator } else { Role::Predator },
            radius: 0.075,
            max_speed: 1.0,
            accel: 3.0,
            collidable: true,
            movable: true,
        }
    }

    fn obstacle() -> Self {
        EntitySpec {
            role: Role::Obstacle,
            radius: 0.2,
            max_speed: 0.0,
            accel: 0.0,
            collidable: true,
            movable: false,
        }
    }

    fn food() -> Self {
        EntitySpec {
            role: Role::Food,
            radius: 0.03,
            max_speed: 0.0,
            accel: 0.0,
            collidable: false,
            movable: false,
        }
    }

    fn forest() -> Self {
        // Radius doubles as the half side of the square region.
        EntitySpec {
            role: Role::Forest,
            radius: FOREST_HALF_SIDE,
            max_speed: 0.0,
            accel: 0.0,
            collidable: false,
            movable: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.radius <= 0.0 {
            return Err(Error::contract("entity radius must be positive"));
        }
        if self.max_speed < 0.0 {
            return Err(Error::contract("entity max_speed must be non-negative"));
        }
        if self.movable && self.accel <= 0.0 {
            return Err(Error::contract("movable entity needs accel > 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Environment {
    PredatorPrey,
    WorldCommunication,
}

impl Environment {
    pub fn as_str(&self) -> &'static str {
        match self {
            Environment::PredatorPrey => "predator_prey",
            Environment::WorldCommunication => "world_communication",
        }
    }
}

/// Full environment parameterisation. No hidden globals: every constant the
/// dynamics or rewards use lives here.
#[derive(Clone, Debug)]
pub struct EnvConfig {
    pub environment: Environment,
    /// M: adversary (prey) count.
    pub adversaries: usize,
    /// N: victim (predator) count.
    pub victims: usize,
    /// T: steps per episode. Episodes never terminate early.
    pub episode_steps: usize,
    pub num_obstacles: usize,
    /// world_communication only.
    pub num_foods: usize,
    pub damping: f64,
    pub dt: f64,
    pub contact_force: f64,
    pub contact_margin: f64,
    /// Soft boundary penalty starts past this coordinate magnitude.
    pub bound_penalty_onset: f64,
    pub collision_reward: f64,
    pub food_shaping_weight: f64,
    /// Discount factor used by the learners.
    pub discount: f64,
}

impl EnvConfig {
    pub fn predator_prey(adversaries: usize, victims: usize) -> Self {
        EnvConfig {
            environment: Environment::PredatorPrey,
            adversaries,
            victims,
            episode_steps: 25,
            num_obstacles: 2,
            num_foods: 0,
            damping: 0.25,
            dt: 0.1,
            contact_force: 100.0,
            contact_margin: 0.001,
            bound_penalty_onset: 0.9,
            collision_reward: 10.0,
            food_shaping_weight: 0.05,
            discount: 0.95,
        }
    }

    pub fn world_communication(adversaries: usize, victims: usize) -> Self {
        EnvConfig {
            environment: Environment::WorldCommunication,
            num_obstacles: 1,
            num_foods: adversaries,
            ..EnvConfig::predator_prey(adversaries, victims)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.adversaries < 1 || self.victims < 1 {
            return Err(Error::contract("need at least one agent per team"));
        }
        if self.episode_steps < 1 {
            return Err(Error::contract("episode_steps must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.discount) {
            return Err(Error::contract("discount must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.damping) {
            return Err(Error::contract("damping must lie in [0, 1)"));
        }
        if self.dt <= 0.0 {
            return Err(Error::contract("dt must be positive"));
        }
        if self.environment == Environment::PredatorPrey && self.num_foods != 0 {
            return Err(Error::contract("predator_prey has no foods"));
        }
        Ok(())
    }
}

/// The state of one episode: positions/velocities for every entity, the step
/// counter, and the count of RNG draws consumed to produce the state.
#[derive(Clone, Debug, PartialEq)]
pub struct WorldState {
    pub positions: Vec<Vec2>,
    pub velocities: Vec<Vec2>,
    pub step_index: usize,
    pub rng_cursor: u64,
}

/// Joint action of both teams; every component must lie in [-1, 1].
#[derive(Clone, Debug)]
pub struct JointAction {
    pub adversary: Vec<Vec2>,
    pub victim: Vec<Vec2>,
}

/// One collision between a victim predator and an adversary prey.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CollisionEvent {
    /// Victim-team index of the predator.
    pub predator: usize,
    /// Adversary-team index of the prey.
    pub prey: usize,
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub state: WorldState,
    pub adversary_rewards: Vec<f64>,
    pub victim_rewards: Vec<f64>,
    pub events: Vec<CollisionEvent>,
}

/// True iff at least one collision occurred in the episode.
pub fn is_caught(events: &[CollisionEvent]) -> bool {
    !events.is_empty()
}

/// Observation layout for one agent. All slot indices are ranges into the
/// observation vector; the layout is fixed per `(config, side, agent)`.
#[derive(Clone, Debug)]
pub struct ObsLayout {
    pub dim: usize,
    pub self_vel: std::ops::Range<usize>,
    pub self_pos: std::ops::Range<usize>,
    pub obstacles: std::ops::Range<usize>,
    pub foods: std::ops::Range<usize>,
    pub teammates: std::ops::Range<usize>,
    pub opponents_pos: std::ops::Range<usize>,
    pub opponents_vel: std::ops::Range<usize>,
    /// Leader relay slots; empty except for non-leader victims in
    /// world_communication.
    pub relay: std::ops::Range<usize>,
    pub opponent_count: usize,
}

impl ObsLayout {
    /// Slots holding opponent `j`'s relative position.
    pub fn opponent_pos_slot(&self, j: usize) -> std::ops::Range<usize> {
        let s = self.opponents_pos.start + 2 * j;
        s..s + 2
    }

    /// Slots holding opponent `j`'s velocity.
    pub fn opponent_vel_slot(&self, j: usize) -> std::ops::Range<usize> {
        let s = self.opponents_vel.start + 2 * j;
        s..s + 2
    }
}

/// A configured environment instance. Stateless apart from the config; the
/// episode state lives in [`WorldState`] and is confined to its caller.
#[derive(Clone, Debug)]
pub struct Env {
    pub config: EnvConfig,
    specs: Vec<EntitySpec>,
    prey_base: usize,
    predator_base: usize,
    obstacle_base: usize,
    food_base: usize,
    forest_index: Option<usize>,
    entity_count: usize,
}

impl Env {
    pub fn new(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        let mut specs = Vec::new();
        let prey_base = 0;
        for _ in 0..config.adversaries {
            specs.push(EntitySpec::prey());
        }
        let predator_base = specs.len();
        for j in 0..config.victims {
            let leader =
                config.environment == Environment::WorldCommunication && j == 0;
            specs.push(EntitySpec::predator(leader));
        }
        let obstacle_base = specs.len();
        for _ in 0..config.num_obstacles {
            specs.push(EntitySpec::obstacle());
        }
        let food_base = specs.len();
        if config.environment == Environment::WorldCommunication {
            for _ in 0..config.num_foods {
                specs.push(EntitySpec::food());
            }
        }
        let forest_index = if config.environment == Environment::WorldCommunication {
            specs.push(EntitySpec::forest());
            Some(specs.len() - 1)
        } else {
            None
        };
        for spec in &specs {
            spec.validate()?;
        }
        let entity_count = specs.len();
        Ok(Env {
            config,
            specs,
            prey_base,
            predator_base,
            obstacle_base,
            food_base,
            forest_index,
            entity_count,
        })
    }

    pub fn entity_count(&self) -> usize {
        self.entity_count
    }

    pub fn specs(&self) -> &[EntitySpec] {
        &self.specs
    }

    pub fn prey_entity(&self, i: usize) -> usize {
        self.prey_base + i
    }

    pub fn predator_entity(&self, j: usize) -> usize {
        self.predator_base + j
    }

    pub fn obstacle_entity(&self, o: usize) -> usize {
        self.obstacle_base + o
    }

    pub fn food_entity(&self, f: usize) -> usize {
        self.food_base + f
    }

    pub fn forest_entity(&self) -> Option<usize> {
        self.forest_index
    }

    fn agent_entity(&self, side: Side, index: usize) -> usize {
        match side {
            Side::Adversary => self.prey_entity(index),
            Side::Victim => self.predator_entity(index),
        }
    }

    fn team_size(&self, side: Side) -> usize {
        match side {
            Side::Adversary => self.config.adversaries,
            Side::Victim => self.config.victims,
        }
    }

    /// In world_communication, victim agent 0 is the leader.
    pub fn is_leader(&self, side: Side, index: usize) -> bool {
        side == Side::Victim
            && index == 0
            && self.config.environment == Environment::WorldCommunication
    }

    /// Place all entities and zero all velocities. Movable entities are
    /// i.i.d. uniform over the arena; obstacles and foods over the landmark
    /// extent; the forest center over its own extent. Draw order is fixed:
    /// preys, predators, obstacles, foods, forest; x before y.
    pub fn reset(&self, rng: &mut RngStream) -> WorldState {
        let mut positions = vec![[0.0, 0.0]; self.entity_count];
        let mut draws = 0u64;
        let draw = |rng: &mut RngStream, extent: f64, draws: &mut u64| -> f64 {
            *draws += 1;
            rng.gen_range(-extent..extent)
        };
        for (e, spec) in self.specs.iter().enumerate() {
            let extent = match spec.role {
                Role::Prey | Role::Predator | Role::LeaderPredator => ARENA_HALF_EXTENT,
                Role::Obstacle | Role::Food => LANDMARK_SPAWN_EXTENT,
                Role::Forest => FOREST_SPAWN_EXTENT,
            };
            positions[e][0] = draw(rng, extent, &mut draws);
            positions[e][1] = draw(rng, extent, &mut draws);
        }
        WorldState {
            positions,
            velocities: vec![[0.0, 0.0]; self.entity_count],
            step_index: 0,
            rng_cursor: draws,
        }
    }

    fn check_action(a: &Vec2) -> Result<()> {
        if a.iter().any(|c| !(-1.0..=1.0).contains(c) || !c.is_finite()) {
            return Err(Error::contract(format!(
                "action component outside [-1, 1]: {a:?}"
            )));
        }
        Ok(())
    }

    /// Soft contact forces between collidable pairs (current positions).
    fn contact_forces(&self, state: &WorldState) -> Vec<Vec2> {
        let mut forces = vec![[0.0, 0.0]; self.entity_count];
        let k = self.config.contact_margin;
        for a in 0..self.entity_count {
            if !self.specs[a].collidable {
                continue;
            }
            for b in a + 1..self.entity_count {
                if !self.specs[b].collidable {
                    continue;
                }
                if !self.specs[a].movable && !self.specs[b].movable {
                    continue;
                }
                let dx = state.positions[a][0] - state.positions[b][0];
                let dy = state.positions[a][1] - state.positions[b][1];
                let dist = (dx * dx + dy * dy).sqrt().max(1e-9);
                let dist_min = self.specs[a].radius + self.specs[b].radius;
                let penetration = softplus(-(dist - dist_min) / k) * k;
                let fx = self.config.contact_force * dx / dist * penetration;
                let fy = self.config.contact_force * dy / dist * penetration;
                if self.specs[a].movable {
                    forces[a][0] += fx;
                    forces[a][1] += fy;
                }
                if self.specs[b].movable {
                    forces[b][0] -= fx;
                    forces[b][1] -= fy;
                }
            }
        }
        forces
    }

    /// Advance the world by one step. Fails if the episode is over or an
    /// action lies outside [-1, 1].
    pub fn physics_step(&self, state: &WorldState, actions: &JointAction) -> Result<WorldState> {
        if state.step_index >= self.config.episode_steps {
            return Err(Error::contract("episode already ran its final step"));
        }
        if actions.adversary.len() != self.config.adversaries
            || actions.victim.len() != self.config.victims
        {
            return Err(Error::dims(
                self.config.adversaries + self.config.victims,
                actions.adversary.len() + actions.victim.len(),
                "joint action",
            ));
        }
        for a in actions.adversary.iter().chain(actions.victim.iter()) {
            Self::check_action(a)?;
        }

        let forces = self.contact_forces(state);
        let mut next = state.clone();
        for (e, spec) in self.specs.iter().enumerate() {
            if !spec.movable {
                continue;
            }
            let action = match spec.role {
                Role::Prey => actions.adversary[e - self.prey_base],
                Role::Predator | Role::LeaderPredator => actions.victim[e - self.predator_base],
                _ => [0.0, 0.0],
            };
            let v = &mut next.velocities[e];
            for c in 0..2 {
                v[c] *= 1.0 - self.config.damping;
                v[c] += (spec.accel * action[c] + forces[e][c]) * self.config.dt;
            }
            let speed = (v[0] * v[0] + v[1] * v[1]).sqrt();
            if speed > spec.max_speed {
                let scale = spec.max_speed / speed;
                v[0] *= scale;
                v[1] *= scale;
            }
            next.positions[e][0] += v[0] * self.config.dt;
            next.positions[e][1] += v[1] * self.config.dt;
        }
        next.step_index += 1;
        Ok(next)
    }

    /// Collision events for the given (end-of-step) state, deduplicated per
    /// (predator, prey) pair.
    pub fn collision_events(&self, state: &WorldState) -> Vec<CollisionEvent> {
        let mut events = Vec::new();
        for j in 0..self.config.victims {
            let pe = self.predator_entity(j);
            for i in 0..self.config.adversaries {
                let ye = self.prey_entity(i);
                let dx = state.positions[pe][0] - state.positions[ye][0];
                let dy = state.positions[pe][1] - state.positions[ye][1];
                let dist = (dx * dx + dy * dy).sqrt();
                if dist < self.specs[pe].radius + self.specs[ye].radius {
                    events.push(CollisionEvent { predator: j, prey: i });
                }
            }
        }
        events
    }

    fn bound_penalty(&self, p: &Vec2) -> f64 {
        let onset = self.config.bound_penalty_onset;
        let mut pen = 0.0;
        for c in 0..2 {
            let x = p[c].abs();
            if x < onset {
                continue;
            }
            if x < onset + 0.1 {
                pen += (x - onset) * 10.0;
            } else {
                pen += (2.0 * x - 2.0).exp().min(10.0);
            }
        }
        pen
    }

    /// Per-agent rewards for the step that produced `after` and `events`.
    pub fn compute_rewards(
        &self,
        after: &WorldState,
        events: &[CollisionEvent],
    ) -> (Vec<f64>, Vec<f64>) {
        let mut adversary = vec![0.0; self.config.adversaries];
        let mut victim = vec![0.0; self.config.victims];
        for ev in events {
            victim[ev.predator] += self.config.collision_reward;
            adversary[ev.prey] -= self.config.collision_reward;
        }
        for i in 0..self.config.adversaries {
            let p = &after.positions[self.prey_entity(i)];
            adversary[i] -= self.bound_penalty(p);
            if self.config.environment == Environment::WorldCommunication
                && self.config.num_foods > 0
            {
                let mut min_dist = f64::INFINITY;
                for f in 0..self.config.num_foods {
                    let fp = &after.positions[self.food_entity(f)];
                    let dx = fp[0] - p[0];
                    let dy = fp[1] - p[1];
                    min_dist = min_dist.min((dx * dx + dy * dy).sqrt());
                }
                adversary[i] -= self.config.food_shaping_weight * min_dist;
            }
        }
        (adversary, victim)
    }

    /// One full step: physics, end-of-step collision events, rewards.
    pub fn step(&self, state: &WorldState, actions: &JointAction) -> Result<StepOutcome> {
        let next = self.physics_step(state, actions)?;
        let events = self.collision_events(&next);
        let (adversary_rewards, victim_rewards) = self.compute_rewards(&next, &events);
        Ok(StepOutcome {
            state: next,
            adversary_rewards,
            victim_rewards,
            events,
        })
    }

    /// Is an entity inside the forest region (Chebyshev box test)?
    pub fn in_forest(&self, state: &WorldState, entity: usize) -> bool {
        let Some(forest) = self.forest_index else {
            return false;
        };
        let half = self.specs[forest].radius;
        let fp = &state.positions[forest];
        let p = &state.positions[entity];
        (p[0] - fp[0]).abs() <= half && (p[1] - fp[1]).abs() <= half
    }

    /// Observation layout for `(side, index)` under this config.
    pub fn obs_layout(&self, side: Side, index: usize) -> ObsLayout {
        let foods = if self.config.environment == Environment::WorldCommunication {
            self.config.num_foods
        } else {
            0
        };
        let team = self.team_size(side);
        let opponents = self.team_size(match side {
            Side::Adversary => Side::Victim,
            Side::Victim => Side::Adversary,
        });
        let relay_len = if self.config.environment == Environment::WorldCommunication
            && side == Side::Victim
            && !self.is_leader(side, index)
        {
            2 * self.config.adversaries
        } else {
            0
        };
        let mut at = 0;
        let mut take = |len: usize| {
            let r = at..at + len;
            at += len;
            r
        };
        let self_vel = take(2);
        let self_pos = take(2);
        let obstacles = take(2 * self.config.num_obstacles);
        let foods = take(2 * foods);
        let teammates = take(2 * (team - 1));
        let opponents_pos = take(2 * opponents);
        let opponents_vel = take(2 * opponents);
        let relay = take(relay_len);
        ObsLayout {
            dim: at,
            self_vel,
            self_pos,
            obstacles,
            foods,
            teammates,
            opponents_pos,
            opponents_vel,
            relay,
            opponent_count: opponents,
        }
    }

    pub fn obs_dim(&self, side: Side, index: usize) -> usize {
        self.obs_layout(side, index).dim
    }

    /// Absolute prey positions as seen by the leader; appended to every
    /// non-leader predator observation in world_communication.
    pub fn leader_relay(&self, state: &WorldState) -> Result<Vec<f64>> {
        if self.config.environment != Environment::WorldCommunication {
            return Err(Error::contract(
                "leader_relay is only defined in world_communication",
            ));
        }
        let mut relay = Vec::with_capacity(2 * self.config.adversaries);
        for i in 0..self.config.adversaries {
            let p = &state.positions[self.prey_entity(i)];
            relay.push(p[0]);
            relay.push(p[1]);
        }
        Ok(relay)
    }

    /// The full-state observation for `(side, index)`:
    /// `[self vel, self pos, obstacles rel, foods rel, teammates rel,
    /// opponents rel, opponents vel, relay]` (relay for non-leader victims in
    /// world_communication only).
    pub fn observation(&self, state: &WorldState, side: Side, index: usize) -> Vec<f64> {
        let me = self.agent_entity(side, index);
        let p = state.positions[me];
        let layout = self.obs_layout(side, index);
        let mut out = Vec::with_capacity(layout.dim);
        out.extend_from_slice(&state.velocities[me]);
        out.extend_from_slice(&p);
        for o in 0..self.config.num_obstacles {
            let op = &state.positions[self.obstacle_entity(o)];
            out.push(op[0] - p[0]);
            out.push(op[1] - p[1]);
        }
        if self.config.environment == Environment::WorldCommunication {
            for f in 0..self.config.num_foods {
                let fp = &state.positions[self.food_entity(f)];
                out.push(fp[0] - p[0]);
                out.push(fp[1] - p[1]);
            }
        }
        let team = self.team_size(side);
        for t in 0..team {
            if t == index {
                continue;
            }
            let tp = &state.positions[self.agent_entity(side, t)];
            out.push(tp[0] - p[0]);
            out.push(tp[1] - p[1]);
        }
        let opponent_side = match side {
            Side::Adversary => Side::Victim,
            Side::Victim => Side::Adversary,
        };
        for o in 0..self.team_size(opponent_side) {
            let op = &state.positions[self.agent_entity(opponent_side, o)];
            out.push(op[0] - p[0]);
            out.push(op[1] - p[1]);
        }
        for o in 0..self.team_size(opponent_side) {
            let ov = &state.velocities[self.agent_entity(opponent_side, o)];
            out.push(ov[0]);
            out.push(ov[1]);
        }
        if !layout.relay.is_empty() {
            out.extend(self.leader_relay(state).expect("relay in world_communication"));
        }
        debug_assert_eq!(out.len(), layout.dim);
        out
    }

    /// One trajectory-dump line per entity: `episode,step,entity,px,py,vx,vy`.
    pub fn dump_lines(&self, episode: usize, state: &WorldState, out: &mut String) {
        use std::fmt::Write;
        for e in 0..self.entity_count {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                episode,
                state.step_index,
                e,
                state.positions[e][0],
                state.positions[e][1],
                state.velocities[e][0],
                state.velocities[e][1]
            )
            .expect("string write");
        }
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

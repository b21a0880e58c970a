//! Victim-play is exactly the one-subgame attack with meritocracy off: under
//! equal seeds both code paths must emit bit-identical parameters.

use subplay_core::engine::{Env, EnvConfig, Side};
use subplay_core::learner::{AgentLearner, Algorithm, Head, MlpParams};
use subplay_core::observe::Limitation;
use subplay_core::opponents::{train_victimplay, TrainConfig};
use subplay_core::rng::stream;
use subplay_core::subplay::{AttackConfig, AttackRun};

fn frozen_victim(env: &Env, seed: u64) -> Vec<MlpParams> {
    (0..env.config.victims)
        .map(|j| {
            MlpParams::xavier(
                env.obs_dim(Side::Victim, j),
                2,
                Head::Tanh,
                &mut stream(seed, "frozen-victim", j as u64),
            )
        })
        .collect()
}

fn assert_identical(a: &AgentLearner, b: &AgentLearner) {
    assert_eq!(a.actor, b.actor, "actor parameters diverged");
    assert_eq!(a.critic, b.critic, "critic parameters diverged");
    assert_eq!(a.actor_target, b.actor_target, "actor target diverged");
    assert_eq!(a.critic_target, b.critic_target, "critic target diverged");
    assert_eq!(a.actor_opt.t, b.actor_opt.t, "optimizer step counts diverged");
}

fn check_degeneracy(env_cfg: EnvConfig, algorithm: Algorithm, episodes: usize, seed: u64) {
    let env = Env::new(env_cfg.clone()).unwrap();
    let victim = frozen_victim(&env, seed ^ 0xbeef);
    let limitation = Limitation::uncertainty(0.5);

    let mut train_cfg = TrainConfig::new(env_cfg.clone(), algorithm, limitation, seed);
    train_cfg.episodes = episodes;
    train_cfg.adversary_buffer = 128;
    train_cfg.adversary_batch = 128;
    let vp = train_victimplay(&train_cfg, &victim).unwrap();

    let mut attack_cfg = AttackConfig::new(env_cfg, algorithm, limitation, seed);
    attack_cfg.subgames = 1;
    attack_cfg.meritocracy = false;
    attack_cfg.episodes = episodes;
    attack_cfg.buffer_capacity = 128;
    attack_cfg.batch_size = 128;
    let mut run = AttackRun::new(attack_cfg, victim.iter().collect()).unwrap();
    for _ in 0..episodes {
        run.step_episode().unwrap();
    }
    let sp = run.into_result(0.0);

    for (i, vp_learner) in vp.learners.iter().enumerate() {
        assert_identical(vp_learner, &sp.learners[i][0]);
        assert_eq!(vp_learner.actor, sp.set.agents[i][0].actor);
    }
}

#[test]
fn ddpg_one_subgame_attack_equals_victimplay() {
    check_degeneracy(EnvConfig::predator_prey(1, 3), Algorithm::Ddpg, 30, 1234);
}

#[test]
fn maddpg_one_subgame_attack_equals_victimplay() {
    check_degeneracy(EnvConfig::predator_prey(2, 2), Algorithm::Maddpg, 25, 991);
}

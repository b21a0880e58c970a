// Scratch calibration driver (removed before release): measures how victim
// quality and attack effectiveness evolve at desk-scale budgets.

use std::time::Instant;
use subplay_core::engine::{Env, EnvConfig, Side};
use subplay_core::evalkit::{evaluate_core, EvalAdversary};
use subplay_core::learner::{Algorithm, MlpParams};
use subplay_core::observe::{Limitation, SubgamePartition};
use subplay_core::opponents::{train_selfplay, train_victimplay, TrainConfig};
use subplay_core::subplay::{run_attack, AttackConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let victim_eps: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(1000);
    let attack_eps: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(400);
    let eval_eps: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(300);
    let seed: u64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(11);

    let env_cfg = EnvConfig::predator_prey(1, 3);
    let env = Env::new(env_cfg.clone()).unwrap();
    let partition = SubgamePartition::fine(3);
    let limitation = Limitation::uncertainty(0.5);
    let none = Limitation::none();

    let eval = |adv: &EvalAdversary, victim: &[MlpParams], lim: &Limitation, tag: &str| {
        let refs: Vec<&MlpParams> = victim.iter().collect();
        let agg = evaluate_core(&env, lim, &partition, adv, &refs, eval_eps, seed ^ 0x5eed).unwrap();
        println!(
            "  {tag}: CR={:.3} CF={:.3} PM={:.4}",
            agg.cr(),
            agg.cf(),
            agg.pm()
        );
        (agg.cr(), agg.cf(), agg.pm())
    };

    println!("== victim selfplay {victim_eps} episodes ==");
    let t0 = Instant::now();
    let mut train_cfg = TrainConfig::new(env_cfg.clone(), Algorithm::Ddpg, none, seed);
    train_cfg.episodes = victim_eps;
    let sp = train_selfplay(&train_cfg, None).unwrap();
    println!("  wall: {:.1}s", t0.elapsed().as_secs_f64());
    let victim: Vec<MlpParams> = sp.victim.iter().map(|l| l.actor.clone()).collect();

    // Victim quality vs the heuristic baseline, before vs after training.
    let init_victim: Vec<MlpParams> = {
        use subplay_core::rng::{net_index, stream};
        let dims: Vec<usize> = (0..3).map(|j| env.obs_dim(Side::Victim, j)).collect();
        let _ = net_index(0, 0);
        (0..3)
            .map(|j| {
                subplay_core::learner::AgentLearner::new(
                    Algorithm::Ddpg,
                    j,
                    &dims,
                    &mut stream(seed, "init-victim", j as u64),
                )
                .actor
            })
            .collect()
    };
    let heuristic = EvalAdversary::Heuristic { speed_scale: 1.0 };
    println!("victim quality vs heuristic prey (full obs):");
    eval(&heuristic, &init_victim, &none, "episode-0 victim");
    eval(&heuristic, &victim, &none, "trained victim  ");

    println!("== baseline (heuristic) under uncertainty 0.5 ==");
    let (_, _, pm_b) = eval(&heuristic, &victim, &limitation, "heuristic");

    println!("== victim-play {attack_eps} episodes ==");
    let t0 = Instant::now();
    let mut vp_cfg = TrainConfig::new(env_cfg.clone(), Algorithm::Ddpg, limitation, seed);
    vp_cfg.episodes = attack_eps;
    let vp = train_victimplay(&vp_cfg, &victim).unwrap();
    println!("  wall: {:.1}s", t0.elapsed().as_secs_f64());
    let vp_actors: Vec<MlpParams> = vp.learners.iter().map(|l| l.actor.clone()).collect();
    let (_, _, pm_v) = eval(
        &EvalAdversary::Single(vp_actors.iter().collect()),
        &victim,
        &limitation,
        "victim-play",
    );

    println!("== subgame attack {attack_eps} episodes ==");
    let t0 = Instant::now();
    let mut at_cfg = AttackConfig::new(env_cfg.clone(), Algorithm::Ddpg, limitation, seed);
    at_cfg.episodes = attack_eps;
    let result = run_attack(&at_cfg, &victim).unwrap();
    println!("  wall: {:.1}s", t0.elapsed().as_secs_f64());
    let (_, _, pm_s) = eval(
        &EvalAdversary::from_set(&result.set),
        &victim,
        &limitation,
        "subgame attack",
    );

    println!("== subgame attack (merit off) {attack_eps} episodes ==");
    let t0 = Instant::now();
    let mut off_cfg = AttackConfig::new(env_cfg.clone(), Algorithm::Ddpg, limitation, seed);
    off_cfg.episodes = attack_eps;
    off_cfg.meritocracy = false;
    let off = run_attack(&off_cfg, &victim).unwrap();
    println!("  wall: {:.1}s", t0.elapsed().as_secs_f64());
    eval(
        &EvalAdversary::from_set(&off.set),
        &victim,
        &limitation,
        "subgame attack (merit off)",
    );

    println!("\nPM ordering: subplay {pm_s:.4} <= victimplay {pm_v:.4} <= heuristic {pm_b:.4} ?");
    println!(
        "ordering holds: {}",
        pm_s <= pm_v + 1e-12 && pm_v <= pm_b + 1e-12
    );
}

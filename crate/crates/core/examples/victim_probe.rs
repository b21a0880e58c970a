// Scratch probe (removed before release): self-play victim quality across
// update schedules and seeds, including the pool tail.

use subplay_core::engine::{Env, EnvConfig, Side};
use subplay_core::evalkit::{evaluate_core, EvalAdversary};
use subplay_core::learner::{AgentLearner, Algorithm, MlpParams};
use subplay_core::observe::{Limitation, SubgamePartition};
use subplay_core::opponents::{train_selfplay, TrainConfig};
use subplay_core::Result;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let episodes: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(3000);
    let steps: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(1);
    let simultaneous: bool = args.get(3).map(|s| s == "sim").unwrap_or(false);
    let seed: u64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(1);

    let env_cfg = EnvConfig::predator_prey(1, 3);
    let env = Env::new(env_cfg.clone()).unwrap();
    let partition = SubgamePartition::fine(3);
    let mut cfg = TrainConfig::new(env_cfg, Algorithm::Ddpg, Limitation::none(), seed);
    cfg.episodes = episodes;
    cfg.victim_update_steps = steps;
    cfg.selfplay_simultaneous = simultaneous;

    let t0 = std::time::Instant::now();
    let mut pool: Vec<Vec<MlpParams>> = Vec::new();
    let result = {
        let mut cb = |_e: usize, victim: &[AgentLearner]| -> Result<()> {
            pool.push(victim.iter().map(|l| l.actor.clone()).collect());
            if pool.len() > 6 {
                pool.remove(0);
            }
            Ok(())
        };
        train_selfplay(&cfg, Some(&mut cb)).unwrap()
    };
    let wall = t0.elapsed().as_secs_f64();

    let heuristic = EvalAdversary::Heuristic { speed_scale: 1.0 };
    let score = |actors: &[MlpParams]| -> (f64, f64, f64) {
        let refs: Vec<&MlpParams> = actors.iter().collect();
        let agg = evaluate_core(
            &env,
            &Limitation::none(),
            &partition,
            &heuristic,
            &refs,
            300,
            4242,
        )
        .unwrap();
        (agg.cr(), agg.cf(), agg.pm())
    };
    let last: Vec<MlpParams> = result.victim.iter().map(|l| l.actor.clone()).collect();
    let (cr, cf, pm) = score(&last);
    println!(
        "episodes={episodes} steps={steps} sim={simultaneous} seed={seed} wall={wall:.0}s final: CR={cr:.3} CF={cf:.3} PM={pm:.4}"
    );
    for (i, ck) in pool.iter().enumerate() {
        let (cr, cf, pm) = score(ck);
        println!("  pool[-{}]: CR={cr:.3} CF={cf:.3} PM={pm:.4}", pool.len() - i);
    }
}

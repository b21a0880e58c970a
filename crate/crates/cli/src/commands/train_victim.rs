//! `train-victim`: produce victims via self-play, checkpointing a pool along
//! the way and scoring the final victim against the heuristic baseline.

use super::{resolve_out_dir, seed_dir, write_train_log};
use crate::artifacts::{save_team, team_actors, PoolManifest};
use crate::config::ExperimentConfig;
use crate::manifest::RunManifest;
use anyhow::{bail, Context, Result};
use std::path::{Path, PathBuf};
use std::time::Instant;
use subplay_core::engine::Env;
use subplay_core::evalkit::{evaluate, EvalAdversary};
use subplay_core::learner::MlpParams;
use subplay_core::observe::SubgamePartition;
use subplay_core::opponents::train_selfplay;

pub fn run(config: &ExperimentConfig, out_override: Option<&Path>) -> Result<Vec<PathBuf>> {
    let out = resolve_out_dir(config, out_override);
    std::fs::create_dir_all(&out).with_context(|| {
        format!(
            "output directory {} is not writable; failing before any compute",
            out.display()
        )
    })?;
    let config_hash = config.config_hash();
    let mut produced = Vec::new();

    for &seed in &config.seeds {
        let dir = seed_dir(&out, seed)?;
        let pool_dir = dir.join("victim_pool");
        std::fs::create_dir_all(&pool_dir)?;
        let mut manifest = RunManifest::new(
            "train-victim",
            &config_hash,
            seed,
            serde_json::to_value(config)?,
        );

        let train_cfg = config.train_config(seed, config.victim_episodes);
        let mut pool_paths: Vec<PathBuf> = Vec::new();
        let algorithm = config.core_algorithm();
        let t0 = Instant::now();
        let result = {
            let pool_dir = pool_dir.clone();
            let pool_paths_ref = &mut pool_paths;
            let mut on_checkpoint =
                move |episode: usize,
                      victim: &[subplay_core::learner::AgentLearner]|
                      -> subplay_core::Result<()> {
                    let path = pool_dir.join(format!("ck_{episode:07}.ckpt"));
                    let ckpt = subplay_core::checkpoint::team_checkpoint(algorithm, victim);
                    ckpt.save(&path)?;
                    pool_paths_ref.push(path);
                    Ok(())
                };
            train_selfplay(&train_cfg, Some(&mut on_checkpoint))
                .map_err(|e| anyhow::anyhow!("{e}"))?
        };
        manifest.phase("selfplay", t0.elapsed().as_secs_f64());

        let victim_path = dir.join("victim.ckpt");
        save_team(&victim_path, algorithm, &result.victim)?;
        let selfplay_adversary_path = dir.join("adversary_selfplay.ckpt");
        save_team(&selfplay_adversary_path, algorithm, &result.adversary)?;
        write_train_log(&dir.join("train_log.csv"), &result.log)?;

        PoolManifest {
            checkpoints: pool_paths
                .iter()
                .map(|p| p.strip_prefix(&dir).unwrap_or(p).to_path_buf())
                .collect(),
        }
        .save(&dir.join("pool.json"))?;

        // Baseline evaluation: heuristic adversary vs the fresh victim.
        let t0 = Instant::now();
        let env = Env::new(config.env_config()).map_err(|e| anyhow::anyhow!("{e}"))?;
        let partition = SubgamePartition::new(config.victims, config.subgames)
            .map_err(|e| anyhow::anyhow!("{e}"))?;
        let actors = team_actors(&result.victim);
        let refs: Vec<&MlpParams> = actors.iter().collect();
        let record = evaluate(
            &env,
            &config.core_limitation(),
            &partition,
            &EvalAdversary::Heuristic {
                speed_scale: config.heuristic_speed,
            },
            &refs,
            config.eval_episodes,
            &[seed],
            &config_hash,
        )
        .map_err(|e| anyhow::anyhow!("{e}"))?;
        manifest.phase("baseline_eval", t0.elapsed().as_secs_f64());
        manifest.metric("baseline_cr", record.cr);
        manifest.metric("baseline_cf", record.cf);
        manifest.metric("baseline_pm", record.pm);
        std::fs::write(
            dir.join("baseline_metrics.csv"),
            format!(
                "{}\n{}\n",
                subplay_core::evalkit::MetricsRecord::csv_header(partition.subgames()),
                record.csv_row()
            ),
        )?;

        manifest.checkpoints.push(victim_path.clone());
        manifest.checkpoints.push(selfplay_adversary_path);
        manifest.checkpoints.extend(pool_paths);
        manifest.write_atomic(&dir.join("manifest.json"))?;
        if pool_dir.read_dir()?.next().is_none() {
            bail!("no pool checkpoints were produced");
        }
        produced.push(victim_path);
    }
    Ok(produced)
}

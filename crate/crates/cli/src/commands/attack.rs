//! `attack`: train an adversary against a victim checkpoint with the selected
//! method (subgame attack, victim-play, self-play, or the heuristic baseline).

use super::{resolve_out_dir, seed_dir, write_attack_log, write_train_log};
use crate::artifacts::{
    load_team, save_heuristic, save_learner_grid, save_subpolicy_set, save_team, team_actors,
};
use crate::config::ExperimentConfig;
use crate::manifest::RunManifest;
use anyhow::{bail, Context, Result};
use std::path::{Path, PathBuf};
use std::time::Instant;
use subplay_core::opponents::{train_selfplay, train_victimplay};
use subplay_core::subplay::run_attack;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttackMethod {
    Subplay,
    Victimplay,
    Selfplay,
    Heuristic,
}

impl AttackMethod {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "subplay" => AttackMethod::Subplay,
            "victimplay" => AttackMethod::Victimplay,
            "selfplay" => AttackMethod::Selfplay,
            "heuristic" => AttackMethod::Heuristic,
            other => bail!("unknown attack method '{other}' (expected subplay|victimplay|selfplay|heuristic)"),
        })
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            AttackMethod::Subplay => "subplay",
            AttackMethod::Victimplay => "victimplay",
            AttackMethod::Selfplay => "selfplay",
            AttackMethod::Heuristic => "heuristic",
        }
    }
}

pub fn run(
    config: &ExperimentConfig,
    victim_path: &Path,
    method: AttackMethod,
    out_override: Option<&Path>,
) -> Result<Vec<PathBuf>> {
    let out = resolve_out_dir(config, out_override);
    std::fs::create_dir_all(&out)
        .with_context(|| format!("creating output directory {}", out.display()))?;
    let config_hash = config.config_hash();
    let algorithm = config.core_algorithm();

    // The heuristic baseline needs no victim and no training.
    if method == AttackMethod::Heuristic {
        let mut produced = Vec::new();
        for &seed in &config.seeds {
            let dir = seed_dir(&out, seed)?;
            let path = dir.join("adversary_heuristic.json");
            save_heuristic(&path, config.heuristic_speed)?;
            let mut manifest = RunManifest::new(
                "attack:heuristic",
                &config_hash,
                seed,
                serde_json::to_value(config)?,
            );
            manifest.labels.insert("method".into(), "heuristic".into());
            manifest.checkpoints.push(path.clone());
            manifest.write_atomic(&dir.join("manifest.json"))?;
            produced.push(path);
        }
        return Ok(produced);
    }

    // Self-play trains both teams from scratch and ignores the victim.
    let victim_actors = if method == AttackMethod::Selfplay {
        Vec::new()
    } else {
        let victim = load_team(victim_path)?;
        super::check_victim_dims(config, &victim)?;
        team_actors(&victim)
    };

    let mut produced = Vec::new();
    for &seed in &config.seeds {
        let dir = seed_dir(&out, seed)?;
        let mut manifest = RunManifest::new(
            &format!("attack:{}", method.as_str()),
            &config_hash,
            seed,
            serde_json::to_value(config)?,
        );
        manifest
            .labels
            .insert("method".into(), method.as_str().into());
        manifest
            .labels
            .insert("victim".into(), victim_path.display().to_string());

        let t0 = Instant::now();
        let artifact_path = match method {
            AttackMethod::Subplay => {
                let attack_cfg = config.attack_config(seed);
                let result =
                    run_attack(&attack_cfg, &victim_actors).map_err(|e| anyhow::anyhow!("{e}"))?;
                let path = dir.join("adversary_subplay.ckpt");
                save_subpolicy_set(&path, &result.set)?;
                save_learner_grid(&dir.join("learners_subplay.ckpt"), algorithm, &result.learners)?;
                write_attack_log(&dir.join("attack_log.csv"), &result.log)?;
                manifest.phase("attack_train", result.wall_clock_secs);
                path
            }
            AttackMethod::Victimplay => {
                let train_cfg = config.train_config(seed, config.attack_episodes);
                let result =
                    train_victimplay(&train_cfg, &victim_actors).map_err(|e| anyhow::anyhow!("{e}"))?;
                let path = dir.join("adversary_victimplay.ckpt");
                save_team(&path, algorithm, &result.learners)?;
                write_train_log(&dir.join("train_log.csv"), &result.log)?;
                manifest.phase("attack_train", result.wall_clock_secs);
                path
            }
            AttackMethod::Selfplay => {
                let train_cfg = config.train_config(seed, config.attack_episodes);
                let result =
                    train_selfplay(&train_cfg, None).map_err(|e| anyhow::anyhow!("{e}"))?;
                let path = dir.join("adversary_selfplay.ckpt");
                save_team(&path, algorithm, &result.adversary)?;
                write_train_log(&dir.join("train_log.csv"), &result.log)?;
                manifest.phase("attack_train", result.wall_clock_secs);
                path
            }
            AttackMethod::Heuristic => unreachable!(),
        };
        manifest.phase("total", t0.elapsed().as_secs_f64());
        manifest.checkpoints.push(artifact_path.clone());
        manifest.write_atomic(&dir.join("manifest.json"))?;
        produced.push(artifact_path);
    }
    Ok(produced)
}

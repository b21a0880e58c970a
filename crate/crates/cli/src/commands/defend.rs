//! `defend`: run one of the three victim-side defenses and emit its report.

use super::{as_eval_adversary, resolve_out_dir};
use crate::artifacts::{load_adversary, load_team, save_team, PoolManifest};
use crate::config::ExperimentConfig;
use crate::manifest::RunManifest;
use anyhow::{bail, Context, Result};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;
use subplay_core::evalkit::{
    defense_adversarial_retraining, defense_fine_tuning, defense_policy_ensemble,
};
use subplay_core::learner::MlpParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DefenseKind {
    Retrain,
    Ensemble,
    Finetune,
}

impl DefenseKind {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "retrain" => DefenseKind::Retrain,
            "ensemble" => DefenseKind::Ensemble,
            "finetune" => DefenseKind::Finetune,
            other => bail!("unknown defense '{other}' (expected retrain|ensemble|finetune)"),
        })
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            DefenseKind::Retrain => "retrain",
            DefenseKind::Ensemble => "ensemble",
            DefenseKind::Finetune => "finetune",
        }
    }
}

pub struct DefendArgs<'a> {
    pub defense: DefenseKind,
    pub victim: Option<&'a Path>,
    pub adversary: Option<&'a Path>,
    pub pool: Option<&'a Path>,
}

pub fn run(
    config: &ExperimentConfig,
    args: &DefendArgs,
    out_override: Option<&Path>,
) -> Result<PathBuf> {
    let out = resolve_out_dir(config, out_override);
    std::fs::create_dir_all(&out)
        .with_context(|| format!("creating output directory {}", out.display()))?;
    let seed = *config.seeds.first().context("need at least one seed")?;
    let attack_cfg = config.attack_config(seed);
    let mut manifest = RunManifest::new(
        &format!("defend:{}", args.defense.as_str()),
        &config.config_hash(),
        seed,
        serde_json::to_value(config)?,
    );
    let t0 = Instant::now();

    let report_path = match args.defense {
        DefenseKind::Retrain => {
            let victim_path = args.victim.context("retrain needs --victim")?;
            let victim = load_team(victim_path)?;
            super::check_victim_dims(config, &victim)?;
            let (retrained, rounds) = defense_adversarial_retraining(
                &attack_cfg,
                victim,
                config.defense_rounds,
                config.defense_finetune_episodes,
                config.victim_buffer,
                config.victim_batch,
                config.eval_episodes,
            )
            .map_err(|e| anyhow::anyhow!("{e}"))?;
            save_team(
                &out.join("victim_retrained.ckpt"),
                config.core_algorithm(),
                &retrained,
            )?;
            let mut csv = String::from("round,cr,cf,pm\n");
            for row in &rounds {
                writeln!(csv, "{},{},{},{}", row.round, row.cr, row.cf, row.pm)?;
            }
            let path = out.join("retrain_report.csv");
            std::fs::write(&path, csv)?;
            if let Some(last) = rounds.last() {
                manifest.metric("final_round_pm", last.pm);
            }
            path
        }
        DefenseKind::Ensemble => {
            let pool_path = args.pool.context("ensemble needs --pool")?;
            let pool_manifest = PoolManifest::load(pool_path)?;
            let mut paths = pool_manifest.resolved(pool_path);
            if paths.len() < config.defense_pool_size {
                bail!(
                    "pool manifest lists {} checkpoints but defense_pool_size is {}",
                    paths.len(),
                    config.defense_pool_size
                );
            }
            // Use the most recent checkpoints.
            paths = paths.split_off(paths.len() - config.defense_pool_size);
            let mut pool: Vec<Vec<MlpParams>> = Vec::new();
            for p in &paths {
                let team = load_team(p)?;
                super::check_victim_dims(config, &team)?;
                pool.push(team.into_iter().map(|l| l.actor).collect());
            }
            let report = defense_policy_ensemble(
                &attack_cfg,
                &pool,
                config.defense_access_fraction,
                config.eval_episodes,
                config.heuristic_speed,
            )
            .map_err(|e| anyhow::anyhow!("{e}"))?;
            let mut csv = String::from(
                "pool_size,accessible,pm_baseline_nodef,pm_attack_nodef,e_nodef,\
                 pm_baseline_def,pm_attack_def,e_def,effect_percent\n",
            );
            writeln!(
                csv,
                "{},{},{},{},{},{},{},{},{}",
                report.pool_size,
                report.accessible,
                report.pm_baseline_nodef,
                report.pm_attack_nodef,
                report.effectiveness_nodef,
                report.pm_baseline_def,
                report.pm_attack_def,
                report.effectiveness_def,
                report.effect_percent
            )?;
            let path = out.join("ensemble_report.csv");
            std::fs::write(&path, csv)?;
            manifest.metric("effect_percent", report.effect_percent);
            path
        }
        DefenseKind::Finetune => {
            let victim_path = args.victim.context("finetune needs --victim")?;
            let adversary_path = args.adversary.context("finetune needs --adversary")?;
            let mut victim = load_team(victim_path)?;
            super::check_victim_dims(config, &victim)?;
            let adversary = load_adversary(adversary_path)?;
            let eval_adversary = as_eval_adversary(&adversary);
            let timeline = defense_fine_tuning(
                &attack_cfg,
                &mut victim,
                &eval_adversary,
                config.defense_finetune_episodes,
                config.defense_cadence,
                config.victim_buffer,
                config.victim_batch,
                config.eval_episodes,
            )
            .map_err(|e| anyhow::anyhow!("{e}"))?;
            save_team(
                &out.join("victim_finetuned.ckpt"),
                config.core_algorithm(),
                &victim,
            )?;
            let mut csv = String::from("episode,cr,cf,pm\n");
            for point in &timeline {
                writeln!(csv, "{},{},{},{}", point.episode, point.cr, point.cf, point.pm)?;
            }
            let path = out.join("finetune_timeline.csv");
            std::fs::write(&path, csv)?;
            if let Some(last) = timeline.last() {
                manifest.metric("final_pm", last.pm);
            }
            path
        }
    };
    manifest.phase("defense", t0.elapsed().as_secs_f64());
    manifest.write_atomic(&out.join("manifest.json"))?;
    Ok(report_path)
}

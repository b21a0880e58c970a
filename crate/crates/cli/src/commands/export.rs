//! `export-activations`: dump the victim actor's 128-unit second-hidden-layer
//! activations against a list of opponents, for external embedding tools.

use super::{as_eval_adversary, resolve_out_dir};
use crate::artifacts::{load_adversary, load_team, team_actors};
use crate::config::ExperimentConfig;
use crate::manifest::RunManifest;
use anyhow::{Context, Result};
use std::path::{Path, PathBuf};
use std::time::Instant;
use subplay_core::engine::Env;
use subplay_core::evalkit::export_activations;
use subplay_core::learner::MlpParams;
use subplay_core::observe::SubgamePartition;

pub fn run(
    config: &ExperimentConfig,
    victim_path: &Path,
    opponents: &[(String, PathBuf)],
    timesteps: usize,
    out_override: Option<&Path>,
) -> Result<PathBuf> {
    let out = resolve_out_dir(config, out_override);
    std::fs::create_dir_all(&out)
        .with_context(|| format!("creating output directory {}", out.display()))?;
    let victim_team = load_team(victim_path)?;
    let env: Env = super::check_victim_dims(config, &victim_team)?;
    let victim_actors = team_actors(&victim_team);
    let victim_refs: Vec<&MlpParams> = victim_actors.iter().collect();
    let partition = SubgamePartition::new(config.victims, config.subgames)
        .map_err(|e| anyhow::anyhow!("{e}"))?;

    let artifacts: Vec<(String, crate::artifacts::AdversaryArtifact)> = opponents
        .iter()
        .map(|(label, path)| Ok((label.clone(), load_adversary(path)?)))
        .collect::<Result<_>>()?;
    let eval_opponents: Vec<(String, subplay_core::evalkit::EvalAdversary)> = artifacts
        .iter()
        .map(|(label, artifact)| (label.clone(), as_eval_adversary(artifact)))
        .collect();

    let seed = *config.seeds.first().context("need at least one seed")?;
    let mut manifest = RunManifest::new(
        "export-activations",
        &config.config_hash(),
        seed,
        serde_json::to_value(config)?,
    );
    let t0 = Instant::now();
    let mut body = String::from("opponent,episode,step,agent");
    for d in 0..subplay_core::learner::HIDDEN {
        body.push_str(&format!(",h{d}"));
    }
    body.push('\n');
    let rows = export_activations(
        &env,
        &config.core_limitation(),
        &partition,
        &victim_refs,
        &eval_opponents,
        timesteps,
        seed,
        &mut body,
    )
    .map_err(|e| anyhow::anyhow!("{e}"))?;
    manifest.phase("export", t0.elapsed().as_secs_f64());
    manifest.metric("rows", rows as f64);
    let path = out.join("activations.csv");
    std::fs::write(&path, body)?;
    manifest.write_atomic(&out.join("manifest.json"))?;
    Ok(path)
}

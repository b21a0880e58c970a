//! `evaluate`: frozen head-to-head evaluation over the config's seed grid.
//! Writes a per-seed metrics CSV and a human-readable summary; optionally
//! dumps full trajectories and computes the improvement delta against
//! baseline and victim-play records.

use super::{artifact_kind, as_eval_adversary, median, resolve_out_dir};
use crate::artifacts::{load_adversary, load_team, team_actors};
use crate::config::ExperimentConfig;
use crate::manifest::RunManifest;
use anyhow::{bail, Context, Result};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;
use subplay_core::engine::Env;
use subplay_core::evalkit::{evaluate_pool_trace, improvement_delta, MetricsRecord};
use subplay_core::learner::MlpParams;
use subplay_core::observe::SubgamePartition;

pub struct EvaluateArgs<'a> {
    pub adversary: &'a Path,
    pub victim: &'a Path,
    pub label: Option<String>,
    pub baseline_record: Option<PathBuf>,
    pub victimplay_record: Option<PathBuf>,
    pub dump_trajectories: bool,
}

/// Median PM column of a previously written metrics CSV.
fn median_pm_from_csv(path: &Path) -> Result<f64> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    let header = lines.next().context("empty metrics CSV")?;
    let pm_col = header
        .split(',')
        .position(|c| c == "pm")
        .context("metrics CSV lacks a pm column")?;
    let mut pms = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let field = line.split(',').nth(pm_col).context("short metrics row")?;
        pms.push(field.parse::<f64>().context("bad pm value")?);
    }
    if pms.is_empty() {
        bail!("metrics CSV {} has no rows", path.display());
    }
    Ok(median(&pms))
}

pub fn run(
    config: &ExperimentConfig,
    args: &EvaluateArgs,
    out_override: Option<&Path>,
) -> Result<PathBuf> {
    let out = resolve_out_dir(config, out_override);
    std::fs::create_dir_all(&out)
        .with_context(|| format!("creating output directory {}", out.display()))?;
    let config_hash = config.config_hash();

    let adversary = load_adversary(args.adversary)?;
    let victim_team = load_team(args.victim)?;
    let env: Env = super::check_victim_dims(config, &victim_team)?;
    let victim_actors = team_actors(&victim_team);
    let victim_refs: Vec<&MlpParams> = victim_actors.iter().collect();
    let partition = SubgamePartition::new(config.victims, config.subgames)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let limitation = config.core_limitation();
    let eval_adversary = as_eval_adversary(&adversary);
    let label = args
        .label
        .clone()
        .unwrap_or_else(|| artifact_kind(&adversary).to_string());

    let mut manifest = RunManifest::new(
        "evaluate",
        &config_hash,
        *config.seeds.first().unwrap_or(&0),
        serde_json::to_value(config)?,
    );
    manifest.labels.insert("label".into(), label.clone());
    manifest
        .labels
        .insert("adversary".into(), args.adversary.display().to_string());
    manifest
        .labels
        .insert("victim".into(), args.victim.display().to_string());

    let t0 = Instant::now();
    let mut rows = Vec::new();
    let mut trajectories = args.dump_trajectories.then(String::new);
    let pool = vec![victim_refs.clone()];
    for &seed in &config.seeds {
        let agg = evaluate_pool_trace(
            &env,
            &limitation,
            &partition,
            &eval_adversary,
            &pool,
            config.eval_episodes,
            seed,
            trajectories.as_mut(),
        )
        .map_err(|e| anyhow::anyhow!("{e}"))?;
        rows.push(MetricsRecord {
            cr: agg.cr(),
            cf: agg.cf(),
            pm: agg.pm(),
            num_episodes: agg.episodes,
            occupancy: agg.occupancy(),
            seeds: vec![seed],
            config_hash: config_hash.clone(),
        });
    }
    manifest.phase("evaluate", t0.elapsed().as_secs_f64());

    let mut csv = MetricsRecord::csv_header(partition.subgames());
    csv.push('\n');
    for row in &rows {
        csv.push_str(&row.csv_row());
        csv.push('\n');
    }
    let metrics_path = out.join("metrics.csv");
    std::fs::write(&metrics_path, &csv)?;
    if let Some(sink) = trajectories {
        let mut dump = String::from("episode,step,entity,px,py,vx,vy\n");
        dump.push_str(&sink);
        std::fs::write(out.join("trajectories.csv"), dump)?;
    }

    let crs: Vec<f64> = rows.iter().map(|r| r.cr).collect();
    let cfs: Vec<f64> = rows.iter().map(|r| r.cf).collect();
    let pms: Vec<f64> = rows.iter().map(|r| r.pm).collect();
    let median_pm = median(&pms);
    manifest.metric("median_cr", median(&crs));
    manifest.metric("median_cf", median(&cfs));
    manifest.metric("median_pm", median_pm);

    let mut summary = String::new();
    writeln!(summary, "evaluation: {label}")?;
    writeln!(summary, "adversary: {}", args.adversary.display())?;
    writeln!(summary, "victim:    {}", args.victim.display())?;
    writeln!(
        summary,
        "episodes:  {} per seed x {} seeds",
        config.eval_episodes,
        config.seeds.len()
    )?;
    for (row, seed) in rows.iter().zip(&config.seeds) {
        writeln!(
            summary,
            "seed {seed}: CR={:.4} CF={:.4} PM={:.4}",
            row.cr, row.cf, row.pm
        )?;
    }
    writeln!(
        summary,
        "median: CR={:.4} CF={:.4} PM={:.4}",
        median(&crs),
        median(&cfs),
        median_pm
    )?;
    match (&args.baseline_record, &args.victimplay_record) {
        (Some(baseline), Some(victimplay)) => {
            let pm_b = median_pm_from_csv(baseline)?;
            let pm_v = median_pm_from_csv(victimplay)?;
            match improvement_delta(pm_b, pm_v, median_pm) {
                Ok(delta) => {
                    manifest.metric("improvement_delta", delta);
                    writeln!(
                        summary,
                        "improvement delta vs victim-play: {:.2}% (PM_B={pm_b:.4}, PM_V={pm_v:.4})",
                        100.0 * delta
                    )?;
                }
                Err(e) => writeln!(summary, "improvement delta undefined: {e}")?,
            }
        }
        _ => {
            writeln!(
                summary,
                "improvement delta omitted (supply --baseline-record and --victimplay-record)"
            )?;
        }
    }
    std::fs::write(out.join("summary.txt"), summary)?;
    manifest.write_atomic(&out.join("manifest.json"))?;
    Ok(metrics_path)
}

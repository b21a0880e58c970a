//! `report`: aggregate run directories into plot-ready tabular bundles
//! (occupancy trajectories, attack-performance bars, scalability curves,
//! defense timelines). No rendering — just joined CSVs.

use crate::config::ExperimentConfig;
use crate::manifest::RunManifest;
use anyhow::{bail, Context, Result};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

struct RunEntry {
    dir: PathBuf,
    manifest: RunManifest,
    config: ExperimentConfig,
}

fn collect_entries(run_dirs: &[PathBuf]) -> Result<Vec<RunEntry>> {
    let mut entries = Vec::new();
    let mut visit = |dir: &Path| -> Result<()> {
        let manifest_path = dir.join("manifest.json");
        if manifest_path.exists() {
            let manifest = RunManifest::load(&manifest_path)?;
            let config: ExperimentConfig = serde_json::from_value(manifest.config.clone())
                .with_context(|| format!("embedded config in {}", manifest_path.display()))?;
            entries.push(RunEntry {
                dir: dir.to_path_buf(),
                manifest,
                config,
            });
        }
        Ok(())
    };
    for dir in run_dirs {
        visit(dir)?;
        // Also accept a parent directory holding per-seed runs.
        if dir.is_dir() {
            let mut children: Vec<PathBuf> = std::fs::read_dir(dir)?
                .filter_map(|e| e.ok())
                .map(|e| e.path())
                .filter(|p| {
                    p.is_dir()
                        && p.file_name()
                            .and_then(|n| n.to_str())
                            .map(|n| n.starts_with("seed_"))
                            .unwrap_or(false)
                })
                .collect();
            children.sort();
            for child in children {
                visit(&child)?;
            }
        }
    }
    if entries.is_empty() {
        bail!("no manifests found under the given run directories");
    }
    Ok(entries)
}

fn check_family(entries: &[&RunEntry], ignore: &[&str], bundle: &str) -> Result<()> {
    let mut hashes: BTreeMap<String, PathBuf> = BTreeMap::new();
    for entry in entries {
        hashes
            .entry(entry.config.family_hash(ignore))
            .or_insert_with(|| entry.dir.clone());
    }
    if hashes.len() > 1 {
        let dirs: Vec<String> = hashes.values().map(|d| d.display().to_string()).collect();
        bail!(
            "refusing to aggregate {bundle}: inconsistent config hashes across {}",
            dirs.join(", ")
        );
    }
    Ok(())
}

fn limitation_level(config: &ExperimentConfig) -> f64 {
    match config.limitation.as_str() {
        "uncertainty" => config.uncertainty_rate,
        "distance" => config.observable_distance,
        "region" => 1.0,
        _ => 0.0,
    }
}

/// Column substitutions shared by every bundle: sweeps may vary, seeds always
/// may.
const PERFORMANCE_IGNORE: &[&str] = &[
    "limitation",
    "uncertainty_rate",
    "observable_distance",
    "proactive_mask_rate",
    "occupancy",
    "mu",
    "subgames",
    "meritocracy",
    "merit_cadence",
    "merit_eval_episodes",
    "pre_observation_episodes",
    "attack_episodes",
];

pub fn run(out: &Path, run_dirs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out)
        .with_context(|| format!("creating report directory {}", out.display()))?;
    let entries = collect_entries(run_dirs)?;
    let mut written = Vec::new();

    // Occupancy bundle: per-episode occupancy estimates from attack logs.
    // Runs with different configurations (e.g. a subgame sweep) cannot share
    // columns, so each exact config family gets its own series file.
    let occupancy_entries: Vec<&RunEntry> = entries
        .iter()
        .filter(|e| e.dir.join("attack_log.csv").exists())
        .collect();
    let mut families: BTreeMap<String, Vec<&RunEntry>> = BTreeMap::new();
    for entry in &occupancy_entries {
        families
            .entry(entry.config.family_hash(&[]))
            .or_default()
            .push(entry);
    }
    for (index, (_, family)) in families.iter().enumerate() {
        let occupancy_entries = family;
        let mut bundle = String::new();
        let mut header_written = false;
        for entry in occupancy_entries {
            let text = std::fs::read_to_string(entry.dir.join("attack_log.csv"))?;
            let mut lines = text.lines();
            let Some(header) = lines.next() else { continue };
            let cols: Vec<&str> = header.split(',').collect();
            let or_cols: Vec<usize> = cols
                .iter()
                .enumerate()
                .filter(|(_, c)| c.starts_with("or"))
                .map(|(i, _)| i)
                .collect();
            if !header_written {
                bundle.push_str("seed,episode");
                for &c in &or_cols {
                    write!(bundle, ",{}", cols[c])?;
                }
                bundle.push('\n');
                header_written = true;
            }
            for line in lines {
                let fields: Vec<&str> = line.split(',').collect();
                if fields.len() < 2 {
                    continue;
                }
                write!(bundle, "{},{}", entry.manifest.seed, fields[0])?;
                for &c in &or_cols {
                    write!(bundle, ",{}", fields.get(c).unwrap_or(&"nan"))?;
                }
                bundle.push('\n');
            }
        }
        let path = if families.len() == 1 {
            out.join("occupancy.csv")
        } else {
            out.join(format!("occupancy_{index}.csv"))
        };
        std::fs::write(&path, bundle)?;
        written.push(path);
    }

    // Performance bundle: per-seed evaluation rows labelled by method and
    // limitation level.
    let perf_entries: Vec<&RunEntry> = entries
        .iter()
        .filter(|e| e.manifest.command == "evaluate" && e.dir.join("metrics.csv").exists())
        .collect();
    if !perf_entries.is_empty() {
        check_family(&perf_entries, PERFORMANCE_IGNORE, "performance bundle")?;
        let mut bundle = String::from("label,limitation,level,seed,cr,cf,pm\n");
        for entry in &perf_entries {
            let label = entry
                .manifest
                .labels
                .get("label")
                .cloned()
                .unwrap_or_else(|| "unknown".into());
            let text = std::fs::read_to_string(entry.dir.join("metrics.csv"))?;
            let mut lines = text.lines();
            let Some(header) = lines.next() else { continue };
            let cols: Vec<&str> = header.split(',').collect();
            let col = |name: &str| cols.iter().position(|c| *c == name);
            let (Some(cr), Some(cf), Some(pm), Some(seeds)) =
                (col("cr"), col("cf"), col("pm"), col("seeds"))
            else {
                bail!("metrics.csv in {} lacks expected columns", entry.dir.display());
            };
            for line in lines {
                if line.trim().is_empty() {
                    continue;
                }
                let fields: Vec<&str> = line.split(',').collect();
                writeln!(
                    bundle,
                    "{label},{},{},{},{},{},{}",
                    entry.config.limitation,
                    limitation_level(&entry.config),
                    fields[seeds],
                    fields[cr],
                    fields[cf],
                    fields[pm]
                )?;
            }
        }
        let path = out.join("performance.csv");
        std::fs::write(&path, bundle)?;
        written.push(path);
    }

    // Scalability bundle: one row per subgame-count value, joining attack
    // wall-clock with evaluation PM.
    let attack_entries: Vec<&RunEntry> = entries
        .iter()
        .filter(|e| e.manifest.command.starts_with("attack:"))
        .collect();
    if !attack_entries.is_empty() {
        let mut sub_values: BTreeMap<usize, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
        let joined: Vec<&RunEntry> = entries
            .iter()
            .filter(|e| {
                e.manifest.command.starts_with("attack:") || e.manifest.command == "evaluate"
            })
            .collect();
        check_family(&joined, &["subgames", "occupancy", "mu"], "scalability bundle")?;
        for entry in &joined {
            let sub = entry.config.subgames;
            let slot = sub_values.entry(sub).or_default();
            if let Some(seconds) = entry.manifest.phase_seconds.get("attack_train") {
                slot.0.push(*seconds);
            }
            if let Some(pm) = entry.manifest.metrics_summary.get("median_pm") {
                slot.1.push(*pm);
            }
        }
        let mut bundle = String::from("subgames,runs,total_train_seconds,median_pm\n");
        for (sub, (seconds, pms)) in &sub_values {
            writeln!(
                bundle,
                "{sub},{},{},{}",
                seconds.len().max(pms.len()),
                seconds.iter().sum::<f64>(),
                super::median(pms)
            )?;
        }
        let path = out.join("scalability.csv");
        std::fs::write(&path, bundle)?;
        written.push(path);
    }

    // Defense bundle: concatenated defense reports.
    let defense_files = [
        ("retrain", "retrain_report.csv"),
        ("ensemble", "ensemble_report.csv"),
        ("finetune", "finetune_timeline.csv"),
    ];
    let defense_entries: Vec<&RunEntry> = entries
        .iter()
        .filter(|e| {
            defense_files
                .iter()
                .any(|(_, file)| e.dir.join(file).exists())
        })
        .collect();
    if !defense_entries.is_empty() {
        check_family(
            &defense_entries,
            &[
                "defense_rounds",
                "defense_finetune_episodes",
                "defense_cadence",
                "defense_access_fraction",
                "defense_pool_size",
            ],
            "defense bundle",
        )?;
        let mut bundle = String::from("defense,source,row\n");
        for entry in &defense_entries {
            for (kind, file) in &defense_files {
                let path = entry.dir.join(file);
                if !path.exists() {
                    continue;
                }
                let text = std::fs::read_to_string(&path)?;
                for line in text.lines().skip(1) {
                    if !line.trim().is_empty() {
                        writeln!(bundle, "{kind},{},{line}", entry.dir.display())?;
                    }
                }
            }
        }
        let path = out.join("defense.csv");
        std::fs::write(&path, bundle)?;
        written.push(path);
    }

    if written.is_empty() {
        bail!("nothing to aggregate: no attack logs, metrics, or defense reports found");
    }
    Ok(written)
}

//! End-to-end pipeline tests at tiny budgets: train-victim -> attack ->
//! evaluate -> defend -> report, all driven through the library entry points
//! the binary wraps.

use std::fs;
use std::path::{Path, PathBuf};
use subplay_cli::artifacts::{load_adversary, load_team, AdversaryArtifact, PoolManifest};
use subplay_cli::commands::attack::{self, AttackMethod};
use subplay_cli::commands::defend::{self, DefendArgs, DefenseKind};
use subplay_cli::commands::evaluate::{self, EvaluateArgs};
use subplay_cli::commands::{report, train_victim};
use subplay_cli::config::{ExperimentConfig, RawConfig};
use subplay_cli::manifest::RunManifest;

fn tiny_config(out: &Path) -> ExperimentConfig {
    let toml = format!(
        r#"
scenario = "1v3"
algorithm = "ddpg"
limitation = "uncertainty"
uncertainty_rate = 0.5
victim_episodes = 60
attack_episodes = 30
eval_episodes = 20
victim_buffer = 400
victim_batch = 200
adversary_buffer = 100
adversary_batch = 100
merit_cadence = 10
merit_eval_episodes = 5
defense_rounds = 1
defense_finetune_episodes = 10
defense_cadence = 5
seeds = [7]
out_dir = "{}"
"#,
        out.display()
    );
    RawConfig::parse_toml(&toml).unwrap().resolve().unwrap()
}

fn strip_timestamps(manifest_path: &Path) -> RunManifest {
    let mut manifest = RunManifest::load(manifest_path).unwrap();
    manifest.started_at = String::new();
    manifest.finished_at = String::new();
    manifest.phase_seconds.clear();
    manifest
}

#[test]
fn full_pipeline_smoke() {
    let tmp = tempfile::tempdir().unwrap();
    let base = tmp.path();

    // --- train-victim ---
    let victim_out = base.join("victim");
    let config = tiny_config(&victim_out);
    let victims = train_victim::run(&config, None).unwrap();
    assert_eq!(victims.len(), 1);
    let victim_path = &victims[0];
    let seed_dir = victim_out.join("seed_7");
    // Checkpoint cadence: 60 episodes -> every max(1, 60/100) = 1 episode.
    let pool = PoolManifest::load(&seed_dir.join("pool.json")).unwrap();
    assert_eq!(pool.checkpoints.len(), 60);
    assert!(seed_dir.join("baseline_metrics.csv").exists());
    assert!(seed_dir.join("train_log.csv").exists());

    // --- attack: all four methods ---
    let mut artifacts = std::collections::BTreeMap::new();
    for method in ["subplay", "victimplay", "selfplay", "heuristic"] {
        let out = base.join(format!("attack_{method}"));
        let mut cfg = tiny_config(&out);
        cfg.out_dir = out.clone();
        let produced = attack::run(
            &cfg,
            victim_path,
            AttackMethod::parse(method).unwrap(),
            None,
        )
        .unwrap();
        assert_eq!(produced.len(), 1);
        artifacts.insert(method.to_string(), produced[0].clone());
    }
    // Heuristic attack emits a descriptor, no training artifacts.
    assert!(artifacts["heuristic"].extension().unwrap() == "json");
    match load_adversary(&artifacts["heuristic"]).unwrap() {
        AdversaryArtifact::Heuristic { speed_scale } => assert_eq!(speed_scale, 1.0),
        _ => panic!("expected heuristic descriptor"),
    }
    // The subgame attack log carries per-episode occupancy columns.
    let log = fs::read_to_string(base.join("attack_subplay/seed_7/attack_log.csv")).unwrap();
    let header = log.lines().next().unwrap();
    assert!(header.contains("or0_0") && header.contains("or0_3"));
    assert!(header.contains("pm0_0") && header.contains("buf0_2"));

    // --- evaluate: deterministic CSV, PM consistency ---
    let eval_out = base.join("eval_subplay");
    let mut cfg = tiny_config(&eval_out);
    cfg.out_dir = eval_out.clone();
    let args = EvaluateArgs {
        adversary: &artifacts["subplay"],
        victim: victim_path,
        label: Some("subplay".into()),
        baseline_record: None,
        victimplay_record: None,
        dump_trajectories: true,
    };
    let metrics_a = evaluate::run(&cfg, &args, None).unwrap();
    let bytes_a = fs::read(&metrics_a).unwrap();
    let trajectories_a = fs::read(eval_out.join("trajectories.csv")).unwrap();
    // Second invocation reproduces byte-identical outputs.
    let eval_out_b = base.join("eval_subplay_b");
    let mut cfg_b = tiny_config(&eval_out_b);
    cfg_b.out_dir = eval_out_b.clone();
    let metrics_b = evaluate::run(&cfg_b, &args, None).unwrap();
    assert_eq!(bytes_a, fs::read(&metrics_b).unwrap());
    assert_eq!(
        trajectories_a,
        fs::read(eval_out_b.join("trajectories.csv")).unwrap()
    );
    // Summary PM equals the harmonic mean recomputed from the CSV row.
    let text = String::from_utf8(bytes_a).unwrap();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    let (cr, cf, pm): (f64, f64, f64) = (
        row[0].parse().unwrap(),
        row[1].parse().unwrap(),
        row[2].parse().unwrap(),
    );
    let expect = if cr == 0.0 || cf == 0.0 {
        0.0
    } else {
        2.0 * cr * cf / (cr + cf)
    };
    assert!((pm - expect).abs() < 1e-12);

    // --- defend: ensemble pool too small is a descriptive failure ---
    let defend_out = base.join("defend_small_pool");
    let mut cfg = tiny_config(&defend_out);
    cfg.out_dir = defend_out.clone();
    cfg.defense_pool_size = 100_000;
    let err = defend::run(
        &cfg,
        &DefendArgs {
            defense: DefenseKind::Ensemble,
            victim: None,
            adversary: None,
            pool: Some(&seed_dir.join("pool.json")),
        },
        None,
    )
    .unwrap_err();
    assert!(format!("{err:#}").contains("defense_pool_size"));

    // --- defend: finetune with zero steps is a single evaluation row ---
    let defend_out = base.join("defend_finetune");
    let mut cfg = tiny_config(&defend_out);
    cfg.out_dir = defend_out.clone();
    cfg.defense_finetune_episodes = 0;
    let report_path = defend::run(
        &cfg,
        &DefendArgs {
            defense: DefenseKind::Finetune,
            victim: Some(victim_path),
            adversary: Some(&artifacts["victimplay"]),
            pool: None,
        },
        None,
    )
    .unwrap();
    let rows = fs::read_to_string(report_path).unwrap();
    assert_eq!(rows.lines().count(), 2, "header plus one row:\n{rows}");

    // --- report: occupancy + performance + scalability bundles ---
    let report_out = base.join("report");
    let bundles = report::run(
        &report_out,
        &[base.join("attack_subplay"), eval_out.clone()],
    )
    .unwrap();
    assert!(bundles.iter().any(|p| p.ends_with("occupancy.csv")));
    let occupancy = fs::read_to_string(report_out.join("occupancy.csv")).unwrap();
    let header: Vec<&str> = occupancy.lines().next().unwrap().split(',').collect();
    for line in occupancy.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        let sum: f64 = fields[2..]
            .iter()
            .map(|v| v.parse::<f64>().unwrap())
            .sum();
        assert!((sum - 1.0).abs() < 1e-6, "occupancy row must sum to 1: {line}");
        assert_eq!(fields.len(), header.len());
    }
}

#[test]
fn scalability_bundle_has_one_row_per_subgame_count() {
    let tmp = tempfile::tempdir().unwrap();
    let base = tmp.path();
    let victim_out = base.join("victim");
    let mut config = tiny_config(&victim_out);
    config.victim_episodes = 30;
    let victims = train_victim::run(&config, None).unwrap();

    let mut report_dirs = Vec::new();
    for sub in [1usize, 3] {
        let attack_out = base.join(format!("attack_sub{sub}"));
        let mut cfg = tiny_config(&attack_out);
        cfg.out_dir = attack_out.clone();
        cfg.subgames = sub;
        let artifacts = attack::run(&cfg, &victims[0], AttackMethod::Subplay, None).unwrap();
        let eval_out = base.join(format!("eval_sub{sub}"));
        let mut ecfg = tiny_config(&eval_out);
        ecfg.out_dir = eval_out.clone();
        ecfg.subgames = sub;
        evaluate::run(
            &ecfg,
            &EvaluateArgs {
                adversary: &artifacts[0],
                victim: &victims[0],
                label: Some(format!("sub{sub}")),
                baseline_record: None,
                victimplay_record: None,
                dump_trajectories: false,
            },
            None,
        )
        .unwrap();
        report_dirs.push(attack_out);
        report_dirs.push(eval_out);
    }
    let report_out = base.join("report");
    report::run(&report_out, &report_dirs).unwrap();
    let scalability = fs::read_to_string(report_out.join("scalability.csv")).unwrap();
    let rows: Vec<&str> = scalability.lines().skip(1).collect();
    assert_eq!(rows.len(), 2, "one row per Sub value:\n{scalability}");
    assert!(rows[0].starts_with("1,"));
    assert!(rows[1].starts_with("3,"));
    // Wall-clock and PM columns are populated.
    for row in rows {
        let fields: Vec<&str> = row.split(',').collect();
        assert!(fields[2].parse::<f64>().unwrap() > 0.0);
        assert!(fields[3].parse::<f64>().unwrap().is_finite());
    }
}

#[test]
fn evaluate_reports_improvement_delta_from_records() {
    let tmp = tempfile::tempdir().unwrap();
    let base = tmp.path();
    let victim_out = base.join("victim");
    let mut config = tiny_config(&victim_out);
    config.victim_episodes = 30;
    let victims = train_victim::run(&config, None).unwrap();

    // Synthetic comparator records with PM_B > PM_V.
    let baseline = base.join("baseline.csv");
    fs::write(&baseline, "cr,cf,pm\n0.9,2.0,1.0\n").unwrap();
    let victimplay = base.join("victimplay.csv");
    fs::write(&victimplay, "cr,cf,pm\n0.5,1.0,0.8\n").unwrap();

    let heur_out = base.join("heur");
    let mut cfg = tiny_config(&heur_out);
    cfg.out_dir = heur_out.clone();
    let heur = attack::run(&cfg, Path::new(""), AttackMethod::Heuristic, None).unwrap();

    let eval_out = base.join("eval");
    let mut cfg = tiny_config(&eval_out);
    cfg.out_dir = eval_out.clone();
    evaluate::run(
        &cfg,
        &EvaluateArgs {
            adversary: &heur[0],
            victim: &victims[0],
            label: None,
            baseline_record: Some(baseline),
            victimplay_record: Some(victimplay),
            dump_trajectories: false,
        },
        None,
    )
    .unwrap();
    let summary = fs::read_to_string(eval_out.join("summary.txt")).unwrap();
    assert!(
        summary.contains("improvement delta vs victim-play:"),
        "summary should carry the delta:\n{summary}"
    );
    let manifest = RunManifest::load(&eval_out.join("manifest.json")).unwrap();
    assert!(manifest.metrics_summary.contains_key("improvement_delta"));
}

#[test]
fn victimplay_artifact_equals_degenerate_subgame_attack() {
    let tmp = tempfile::tempdir().unwrap();
    let base = tmp.path();
    let victim_out = base.join("victim");
    let mut config = tiny_config(&victim_out);
    config.victim_episodes = 30;
    let victims = train_victim::run(&config, None).unwrap();
    let victim_path = &victims[0];

    let vp_out = base.join("vp");
    let mut vp_cfg = tiny_config(&vp_out);
    vp_cfg.out_dir = vp_out.clone();
    let vp = attack::run(&vp_cfg, victim_path, AttackMethod::Victimplay, None).unwrap();

    let sp_out = base.join("sp");
    let mut sp_cfg = tiny_config(&sp_out);
    sp_cfg.out_dir = sp_out.clone();
    sp_cfg.subgames = 1;
    sp_cfg.meritocracy = false;
    let sp = attack::run(&sp_cfg, victim_path, AttackMethod::Subplay, None).unwrap();

    let vp_team = load_team(&vp[0]).unwrap();
    let sp_set = match load_adversary(&sp[0]).unwrap() {
        AdversaryArtifact::Set(set) => set,
        _ => panic!("expected subpolicy set"),
    };
    assert_eq!(sp_set.subgames(), 1);
    for (learner, subs) in vp_team.iter().zip(&sp_set.agents) {
        assert_eq!(learner.actor, subs[0].actor, "artifacts must be bit-identical");
    }
}

#[test]
fn manifests_are_reproducible_modulo_timestamps() {
    let tmp = tempfile::tempdir().unwrap();
    let out_a = tmp.path().join("a");
    let out_b = tmp.path().join("b");
    let mut config = tiny_config(&out_a);
    config.victim_episodes = 25;
    train_victim::run(&config, None).unwrap();
    let mut config_b = config.clone();
    config_b.out_dir = out_b.clone();
    train_victim::run(&config_b, None).unwrap();

    let a = strip_timestamps(&out_a.join("seed_7/manifest.json"));
    let b = strip_timestamps(&out_b.join("seed_7/manifest.json"));
    assert_eq!(a.config_hash, b.config_hash);
    assert_eq!(a.metrics_summary, b.metrics_summary);
    // The victim artifacts themselves are byte-identical.
    let bytes_a = fs::read(out_a.join("seed_7/victim.ckpt")).unwrap();
    let bytes_b = fs::read(out_b.join("seed_7/victim.ckpt")).unwrap();
    assert_eq!(bytes_a, bytes_b);
}

#[test]
fn malformed_config_key_is_named() {
    let err = RawConfig::parse_toml("victim_episodess = 10\n").unwrap_err();
    assert!(format!("{err:#}").contains("victim_episodess"));
}

#[test]
fn report_refuses_mixed_families() {
    let tmp = tempfile::tempdir().unwrap();
    let base = tmp.path();
    // Two attack runs whose configs differ in a non-sweep field (lambda).
    let victim_out = base.join("victim");
    let mut config = tiny_config(&victim_out);
    config.victim_episodes = 25;
    let victims = train_victim::run(&config, None).unwrap();

    for (name, lambda) in [("l5", 0.5), ("l7", 0.7)] {
        let out = base.join(name);
        let mut cfg = tiny_config(&out);
        cfg.out_dir = out.clone();
        cfg.lambda = lambda;
        attack::run(&cfg, &victims[0], AttackMethod::Subplay, None).unwrap();
    }
    let err = report::run(
        &base.join("report"),
        &[base.join("l5"), base.join("l7")],
    )
    .unwrap_err();
    assert!(format!("{err:#}").contains("inconsistent config hashes"));
}

#[test]
fn evaluate_single_episode_has_binary_cr() {
    let tmp = tempfile::tempdir().unwrap();
    let base = tmp.path();
    let victim_out = base.join("victim");
    let mut config = tiny_config(&victim_out);
    config.victim_episodes = 25;
    let victims = train_victim::run(&config, None).unwrap();

    let heur_out = base.join("heur");
    let mut cfg = tiny_config(&heur_out);
    cfg.out_dir = heur_out.clone();
    let heur = attack::run(&cfg, Path::new(""), AttackMethod::Heuristic, None).unwrap();

    let eval_out = base.join("eval1");
    let mut cfg = tiny_config(&eval_out);
    cfg.out_dir = eval_out.clone();
    cfg.eval_episodes = 1;
    let metrics = evaluate::run(
        &cfg,
        &EvaluateArgs {
            adversary: &heur[0],
            victim: &victims[0],
            label: None,
            baseline_record: None,
            victimplay_record: None,
            dump_trajectories: false,
        },
        None,
    )
    .unwrap();
    let text = fs::read_to_string(metrics).unwrap();
    let cr: f64 = text
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!(cr == 0.0 || cr == 1.0);
}

#[test]
fn out_root_env_var_only_affects_relative_dirs() {
    // Absolute out_dir wins regardless of SUBPLAY_OUT_ROOT.
    let config = tiny_config(Path::new("/absolute/somewhere"));
    std::env::set_var("SUBPLAY_OUT_ROOT", "/tmp/root");
    let resolved = subplay_cli::commands::resolve_out_dir(&config, None);
    assert_eq!(resolved, PathBuf::from("/absolute/somewhere"));
    let mut rel = config.clone();
    rel.out_dir = PathBuf::from("runs/x");
    let resolved = subplay_cli::commands::resolve_out_dir(&rel, None);
    assert_eq!(resolved, PathBuf::from("/tmp/root/runs/x"));
    std::env::remove_var("SUBPLAY_OUT_ROOT");
}

//! Experiment configuration: a flat, typed key-value document.
//!
//! Unknown keys are hard errors. Every field is either set explicitly or
//! resolved from the documented defaults below, and the config hash is taken
//! over the *resolved* document, so reordering keys or spelling out defaults
//! never changes the hash. The output directory is excluded from the hash.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use subplay_core::engine::{EnvConfig, Environment};
use subplay_core::learner::Algorithm;
use subplay_core::observe::{Limitation, LimitationKind};
use subplay_core::opponents::TrainConfig;
use subplay_core::subplay::{AttackConfig, OccupancyMethod};

/// Raw on-disk schema. Every field optional; unknown keys rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub environment: Option<String>,
    pub scenario: Option<String>,
    pub algorithm: Option<String>,
    pub limitation: Option<String>,
    pub uncertainty_rate: Option<f64>,
    pub observable_distance: Option<f64>,
    pub proactive_mask_rate: Option<f64>,
    pub occupancy: Option<String>,
    pub subgames: Option<usize>,
    pub lambda: Option<f64>,
    pub beta: Option<f64>,
    pub mu: Option<f64>,
    pub victim_episodes: Option<usize>,
    pub attack_episodes: Option<usize>,
    pub eval_episodes: Option<usize>,
    pub meritocracy: Option<bool>,
    pub merit_cadence: Option<usize>,
    pub merit_eval_episodes: Option<usize>,
    pub pre_observation_episodes: Option<usize>,
    pub episode_steps: Option<usize>,
    pub discount: Option<f64>,
    pub num_obstacles: Option<usize>,
    pub num_foods: Option<usize>,
    pub collision_reward: Option<f64>,
    pub food_shaping_weight: Option<f64>,
    pub bound_penalty_onset: Option<f64>,
    pub damping: Option<f64>,
    pub dt: Option<f64>,
    pub contact_force: Option<f64>,
    pub contact_margin: Option<f64>,
    pub victim_buffer: Option<usize>,
    pub victim_batch: Option<usize>,
    pub victim_update_steps: Option<usize>,
    pub adversary_buffer: Option<usize>,
    pub adversary_batch: Option<usize>,
    pub heuristic_speed: Option<f64>,
    pub defense_rounds: Option<usize>,
    pub defense_finetune_episodes: Option<usize>,
    pub defense_cadence: Option<usize>,
    pub defense_access_fraction: Option<f64>,
    pub defense_pool_size: Option<usize>,
    pub seeds: Option<Vec<u64>>,
    pub out_dir: Option<PathBuf>,
}

/// Fully resolved experiment configuration.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub environment: String,
    pub scenario: String,
    pub adversaries: usize,
    pub victims: usize,
    pub algorithm: String,
    pub limitation: String,
    pub uncertainty_rate: f64,
    pub observable_distance: f64,
    pub proactive_mask_rate: f64,
    pub occupancy: String,
    pub subgames: usize,
    pub lambda: f64,
    pub beta: f64,
    /// Success probability for static estimation (default 1 - uncertainty).
    pub mu: f64,
    pub victim_episodes: usize,
    pub attack_episodes: usize,
    pub eval_episodes: usize,
    pub meritocracy: bool,
    pub merit_cadence: usize,
    pub merit_eval_episodes: usize,
    pub pre_observation_episodes: usize,
    pub episode_steps: usize,
    pub discount: f64,
    pub num_obstacles: usize,
    pub num_foods: usize,
    pub collision_reward: f64,
    pub food_shaping_weight: f64,
    pub bound_penalty_onset: f64,
    pub damping: f64,
    pub dt: f64,
    pub contact_force: f64,
    pub contact_margin: f64,
    pub victim_buffer: usize,
    pub victim_batch: usize,
    pub victim_update_steps: usize,
    pub adversary_buffer: usize,
    pub adversary_batch: usize,
    pub heuristic_speed: f64,
    pub defense_rounds: usize,
    pub defense_finetune_episodes: usize,
    pub defense_cadence: usize,
    pub defense_access_fraction: f64,
    pub defense_pool_size: usize,
    pub seeds: Vec<u64>,
    #[serde(skip, default)]
    pub out_dir: PathBuf,
}

fn parse_scenario(s: &str) -> Result<(usize, usize)> {
    let (m, n) = s
        .split_once('v')
        .with_context(|| format!("scenario must look like '2v3', got '{s}'"))?;
    let m: usize = m.parse().with_context(|| format!("bad adversary count in '{s}'"))?;
    let n: usize = n.parse().with_context(|| format!("bad victim count in '{s}'"))?;
    if m < 1 || n < 1 {
        bail!("scenario needs at least one agent per team, got '{s}'");
    }
    Ok((m, n))
}

impl RawConfig {
    pub fn parse_toml(text: &str) -> Result<Self> {
        toml::from_str(text).context("config schema error")
    }

    /// Apply documented defaults and validate.
    pub fn resolve(self) -> Result<ExperimentConfig> {
        let environment = self.environment.unwrap_or_else(|| "predator_prey".into());
        let env_kind = match environment.as_str() {
            "predator_prey" => Environment::PredatorPrey,
            "world_communication" => Environment::WorldCommunication,
            other => bail!("unknown environment '{other}'"),
        };
        let scenario = self.scenario.unwrap_or_else(|| "1v3".into());
        let (adversaries, victims) = parse_scenario(&scenario)?;
        let algorithm = self.algorithm.unwrap_or_else(|| "ddpg".into());
        Algorithm::parse(&algorithm).map_err(|e| anyhow::anyhow!("{e}"))?;
        let limitation = self.limitation.unwrap_or_else(|| "none".into());
        let uncertainty_rate = self.uncertainty_rate.unwrap_or(0.0);
        let observable_distance = self.observable_distance.unwrap_or(1.0);
        let proactive_mask_rate = self.proactive_mask_rate.unwrap_or(0.0);
        let lim_kind = match limitation.as_str() {
            "none" => LimitationKind::None,
            "uncertainty" => LimitationKind::Uncertainty,
            "distance" => LimitationKind::Distance,
            "region" => LimitationKind::Region,
            other => bail!("unknown limitation '{other}'"),
        };
        if lim_kind == LimitationKind::Region && env_kind != Environment::WorldCommunication {
            bail!("region limitation requires world_communication (it needs a forest)");
        }
        // Occupancy default follows the limitation: the binomial prior for
        // uncertainty, dynamic observation for distance and region.
        let occupancy = self.occupancy.unwrap_or_else(|| {
            match lim_kind {
                LimitationKind::Uncertainty | LimitationKind::None => "static_estimation",
                LimitationKind::Distance | LimitationKind::Region => "dynamic_observation",
            }
            .into()
        });
        OccupancyMethod::parse(&occupancy).map_err(|e| anyhow::anyhow!("{e}"))?;

        let config = ExperimentConfig {
            adversaries,
            victims,
            subgames: self.subgames.unwrap_or(victims + 1),
            mu: self.mu.unwrap_or(1.0 - uncertainty_rate),
            environment,
            scenario,
            algorithm,
            limitation,
            uncertainty_rate,
            observable_distance,
            proactive_mask_rate,
            occupancy,
            lambda: self.lambda.unwrap_or(0.5),
            beta: self.beta.unwrap_or(0.9),
            victim_episodes: self.victim_episodes.unwrap_or(3000),
            attack_episodes: self.attack_episodes.unwrap_or(1000),
            eval_episodes: self.eval_episodes.unwrap_or(500),
            meritocracy: self.meritocracy.unwrap_or(true),
            merit_cadence: self.merit_cadence.unwrap_or(100),
            merit_eval_episodes: self.merit_eval_episodes.unwrap_or(300),
            pre_observation_episodes: self.pre_observation_episodes.unwrap_or(1000),
            episode_steps: self.episode_steps.unwrap_or(25),
            discount: self.discount.unwrap_or(0.95),
            num_obstacles: self.num_obstacles.unwrap_or(match env_kind {
                Environment::PredatorPrey => 2,
                Environment::WorldCommunication => 1,
            }),
            num_foods: self.num_foods.unwrap_or(match env_kind {
                Environment::PredatorPrey => 0,
                Environment::WorldCommunication => adversaries,
            }),
            collision_reward: self.collision_reward.unwrap_or(10.0),
            food_shaping_weight: self.food_shaping_weight.unwrap_or(0.05),
            bound_penalty_onset: self.bound_penalty_onset.unwrap_or(0.9),
            damping: self.damping.unwrap_or(0.25),
            dt: self.dt.unwrap_or(0.1),
            contact_force: self.contact_force.unwrap_or(100.0),
            contact_margin: self.contact_margin.unwrap_or(0.001),
            victim_buffer: self.victim_buffer.unwrap_or(200_000),
            victim_batch: self.victim_batch.unwrap_or(1024),
            victim_update_steps: self.victim_update_steps.unwrap_or(4),
            adversary_buffer: self.adversary_buffer.unwrap_or(512),
            adversary_batch: self.adversary_batch.unwrap_or(512),
            heuristic_speed: self.heuristic_speed.unwrap_or(1.0),
            defense_rounds: self.defense_rounds.unwrap_or(5),
            defense_finetune_episodes: self.defense_finetune_episodes.unwrap_or(300),
            defense_cadence: self.defense_cadence.unwrap_or(50),
            defense_access_fraction: self.defense_access_fraction.unwrap_or(1.0),
            defense_pool_size: self.defense_pool_size.unwrap_or(3),
            seeds: self.seeds.unwrap_or_else(|| vec![1, 2, 3]),
            out_dir: self.out_dir.unwrap_or_else(|| PathBuf::from("runs/default")),
        };
        config.validate()?;
        Ok(config)
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        RawConfig::parse_toml(&text)?.resolve()
    }

    pub fn validate(&self) -> Result<()> {
        self.env_config().validate().map_err(|e| anyhow::anyhow!("{e}"))?;
        self.core_limitation().validate().map_err(|e| anyhow::anyhow!("{e}"))?;
        if self.subgames < 1 || self.subgames > self.victims + 1 {
            bail!(
                "subgames must lie in [1, {}], got {}",
                self.victims + 1,
                self.subgames
            );
        }
        if self.seeds.is_empty() {
            bail!("need at least one seed");
        }
        if self.victim_batch > self.victim_buffer || self.adversary_batch > self.adversary_buffer {
            bail!("batch size cannot exceed buffer capacity");
        }
        if !(0.0..=1.0).contains(&self.defense_access_fraction)
            || self.defense_access_fraction == 0.0
        {
            bail!("defense_access_fraction must lie in (0, 1]");
        }
        Ok(())
    }

    pub fn environment_kind(&self) -> Environment {
        match self.environment.as_str() {
            "world_communication" => Environment::WorldCommunication,
            _ => Environment::PredatorPrey,
        }
    }

    pub fn core_algorithm(&self) -> Algorithm {
        Algorithm::parse(&self.algorithm).expect("validated")
    }

    pub fn core_occupancy(&self) -> OccupancyMethod {
        OccupancyMethod::parse(&self.occupancy).expect("validated")
    }

    pub fn core_limitation(&self) -> Limitation {
        let kind = match self.limitation.as_str() {
            "uncertainty" => LimitationKind::Uncertainty,
            "distance" => LimitationKind::Distance,
            "region" => LimitationKind::Region,
            _ => LimitationKind::None,
        };
        Limitation {
            kind,
            uncertainty_rate: self.uncertainty_rate,
            observable_distance: self.observable_distance,
            proactive_mask_rate: self.proactive_mask_rate,
        }
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            environment: self.environment_kind(),
            adversaries: self.adversaries,
            victims: self.victims,
            episode_steps: self.episode_steps,
            num_obstacles: self.num_obstacles,
            num_foods: self.num_foods,
            damping: self.damping,
            dt: self.dt,
            contact_force: self.contact_force,
            contact_margin: self.contact_margin,
            bound_penalty_onset: self.bound_penalty_onset,
            collision_reward: self.collision_reward,
            food_shaping_weight: self.food_shaping_weight,
            discount: self.discount,
        }
    }

    pub fn attack_config(&self, seed: u64) -> AttackConfig {
        let mut cfg = AttackConfig::new(
            self.env_config(),
            self.core_algorithm(),
            self.core_limitation(),
            seed,
        );
        cfg.subgames = self.subgames;
        cfg.occupancy = self.core_occupancy();
        cfg.lambda = self.lambda;
        cfg.beta = self.beta;
        cfg.mu = Some(self.mu);
        cfg.episodes = self.attack_episodes;
        cfg.meritocracy = self.meritocracy;
        cfg.merit_cadence = self.merit_cadence;
        cfg.merit_eval_episodes = self.merit_eval_episodes;
        cfg.pre_observation_episodes = self.pre_observation_episodes;
        cfg.buffer_capacity = self.adversary_buffer;
        cfg.batch_size = self.adversary_batch;
        cfg
    }

    pub fn train_config(&self, seed: u64, episodes: usize) -> TrainConfig {
        let mut cfg = TrainConfig::new(
            self.env_config(),
            self.core_algorithm(),
            self.core_limitation(),
            seed,
        );
        cfg.episodes = episodes;
        cfg.adversary_buffer = self.adversary_buffer;
        cfg.adversary_batch = self.adversary_batch;
        cfg.victim_buffer = self.victim_buffer;
        cfg.victim_batch = self.victim_batch;
        cfg.victim_update_steps = self.victim_update_steps;
        cfg
    }

    /// Canonical key=value rendering in fixed field order, `out_dir` excluded.
    pub fn canonical_string(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k}={v}").expect("write");
        kv("environment", self.environment.clone());
        kv("scenario", self.scenario.clone());
        kv("algorithm", self.algorithm.clone());
        kv("limitation", self.limitation.clone());
        kv("uncertainty_rate", self.uncertainty_rate.to_string());
        kv("observable_distance", self.observable_distance.to_string());
        kv("proactive_mask_rate", self.proactive_mask_rate.to_string());
        kv("occupancy", self.occupancy.clone());
        kv("subgames", self.subgames.to_string());
        kv("lambda", self.lambda.to_string());
        kv("beta", self.beta.to_string());
        kv("mu", self.mu.to_string());
        kv("victim_episodes", self.victim_episodes.to_string());
        kv("attack_episodes", self.attack_episodes.to_string());
        kv("eval_episodes", self.eval_episodes.to_string());
        kv("meritocracy", self.meritocracy.to_string());
        kv("merit_cadence", self.merit_cadence.to_string());
        kv("merit_eval_episodes", self.merit_eval_episodes.to_string());
        kv(
            "pre_observation_episodes",
            self.pre_observation_episodes.to_string(),
        );
        kv("episode_steps", self.episode_steps.to_string());
        kv("discount", self.discount.to_string());
        kv("num_obstacles", self.num_obstacles.to_string());
        kv("num_foods", self.num_foods.to_string());
        kv("collision_reward", self.collision_reward.to_string());
        kv("food_shaping_weight", self.food_shaping_weight.to_string());
        kv("bound_penalty_onset", self.bound_penalty_onset.to_string());
        kv("damping", self.damping.to_string());
        kv("dt", self.dt.to_string());
        kv("contact_force", self.contact_force.to_string());
        kv("contact_margin", self.contact_margin.to_string());
        kv("victim_buffer", self.victim_buffer.to_string());
        kv("victim_batch", self.victim_batch.to_string());
        kv("victim_update_steps", self.victim_update_steps.to_string());
        kv("adversary_buffer", self.adversary_buffer.to_string());
        kv("adversary_batch", self.adversary_batch.to_string());
        kv("heuristic_speed", self.heuristic_speed.to_string());
        kv("defense_rounds", self.defense_rounds.to_string());
        kv(
            "defense_finetune_episodes",
            self.defense_finetune_episodes.to_string(),
        );
        kv("defense_cadence", self.defense_cadence.to_string());
        kv(
            "defense_access_fraction",
            self.defense_access_fraction.to_string(),
        );
        kv("defense_pool_size", self.defense_pool_size.to_string());
        let seeds = self
            .seeds
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .join(",");
        kv("seeds", seeds);
        s
    }

    pub fn config_hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Hash with the given keys replaced by a sentinel; used to group runs
    /// that differ only along a sweep axis (plus seeds) into one bundle.
    pub fn family_hash(&self, ignore: &[&str]) -> String {
        let mut canonical = String::new();
        for line in self.canonical_string().lines() {
            let key = line.split('=').next().unwrap_or("");
            if ignore.contains(&key) || key == "seeds" {
                writeln!(canonical, "{key}=*").expect("write");
            } else {
                writeln!(canonical, "{line}").expect("write");
            }
        }
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve_and_validate() {
        let config = RawConfig::default().resolve().unwrap();
        assert_eq!(config.scenario, "1v3");
        assert_eq!(config.subgames, 4);
        assert_eq!(config.num_obstacles, 2);
        assert_eq!(config.mu, 1.0);
    }

    #[test]
    fn hash_is_stable_under_reordering_and_explicit_defaults() {
        let a = RawConfig::parse_toml("scenario = \"2v3\"\nalgorithm = \"maddpg\"\n")
            .unwrap()
            .resolve()
            .unwrap();
        let b = RawConfig::parse_toml("algorithm = \"maddpg\"\nscenario = \"2v3\"\n")
            .unwrap()
            .resolve()
            .unwrap();
        // Spelling out a default leaves the hash unchanged.
        let c = RawConfig::parse_toml(
            "algorithm = \"maddpg\"\nscenario = \"2v3\"\nlambda = 0.5\nout_dir = \"elsewhere\"\n",
        )
        .unwrap()
        .resolve()
        .unwrap();
        assert_eq!(a.config_hash(), b.config_hash());
        assert_eq!(a.config_hash(), c.config_hash());
        let d = RawConfig::parse_toml("scenario = \"2v3\"\nalgorithm = \"maddpg\"\nlambda = 0.6\n")
            .unwrap()
            .resolve()
            .unwrap();
        assert_ne!(a.config_hash(), d.config_hash());
    }

    #[test]
    fn unknown_keys_are_named_in_the_error() {
        let err = RawConfig::parse_toml("scenari = \"2v3\"\n").unwrap_err();
        let msg = format!("{err:#}");
        assert!(msg.contains("scenari"), "error should name the key: {msg}");
    }

    #[test]
    fn occupancy_defaults_follow_limitation() {
        let u = RawConfig::parse_toml("limitation = \"uncertainty\"\nuncertainty_rate = 0.5\n")
            .unwrap()
            .resolve()
            .unwrap();
        assert_eq!(u.occupancy, "static_estimation");
        assert_eq!(u.mu, 0.5);
        let d = RawConfig::parse_toml("limitation = \"distance\"\nobservable_distance = 1.0\n")
            .unwrap()
            .resolve()
            .unwrap();
        assert_eq!(d.occupancy, "dynamic_observation");
    }

    #[test]
    fn region_limitation_requires_world_communication() {
        assert!(RawConfig::parse_toml("limitation = \"region\"\n")
            .unwrap()
            .resolve()
            .is_err());
        let ok = RawConfig::parse_toml(
            "limitation = \"region\"\nenvironment = \"world_communication\"\nscenario = \"2v3\"\n",
        )
        .unwrap()
        .resolve()
        .unwrap();
        assert_eq!(ok.num_foods, 2);
        assert_eq!(ok.num_obstacles, 1);
    }

    #[test]
    fn family_hash_neutralizes_the_sweep_axis() {
        let a = RawConfig::parse_toml("subgames = 1\n").unwrap().resolve().unwrap();
        let b = RawConfig::parse_toml("subgames = 3\nseeds = [9]\n")
            .unwrap()
            .resolve()
            .unwrap();
        assert_ne!(a.config_hash(), b.config_hash());
        assert_eq!(a.family_hash(&["subgames"]), b.family_hash(&["subgames"]));
        let c = RawConfig::parse_toml("subgames = 3\nlambda = 0.7\n")
            .unwrap()
            .resolve()
            .unwrap();
        assert_ne!(a.family_hash(&["subgames"]), c.family_hash(&["subgames"]));
    }
}

//! Artifact persistence: victim team checkpoints, adversary policies (single
//! team, subpolicy set, or heuristic descriptor), and victim pool manifests.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use subplay_core::checkpoint::{
    push_learner, push_mlp, read_learner, read_mlp, read_team, team_checkpoint, Block, Checkpoint,
};
use subplay_core::learner::{AgentLearner, Algorithm, MlpParams};
use subplay_core::observe::SubgamePartition;
use subplay_core::subplay::{RetainedSubpolicy, SubpolicySet};

pub fn save_team(path: &Path, algorithm: Algorithm, learners: &[AgentLearner]) -> Result<()> {
    let ckpt = team_checkpoint(algorithm, learners);
    ckpt.save(path)
        .with_context(|| format!("saving team checkpoint {}", path.display()))?;
    Ok(())
}

pub fn load_team(path: &Path) -> Result<Vec<AgentLearner>> {
    let ckpt = Checkpoint::load(path)
        .with_context(|| format!("loading team checkpoint {}", path.display()))?;
    if ckpt.find("subpolicy_set").is_some() {
        bail!(
            "{} holds a subpolicy set, not a team checkpoint",
            path.display()
        );
    }
    read_team(&ckpt).with_context(|| format!("decoding team checkpoint {}", path.display()))
}

pub fn team_actors(learners: &[AgentLearner]) -> Vec<MlpParams> {
    learners.iter().map(|l| l.actor.clone()).collect()
}

pub fn save_subpolicy_set(path: &Path, set: &SubpolicySet) -> Result<()> {
    let mut ckpt = Checkpoint::new(set.algorithm.as_str());
    ckpt.push(Block::scalar("subpolicy_set", 1.0));
    ckpt.push(Block::scalar("adversaries", set.adversaries() as f64));
    ckpt.push(Block::scalar("subgames", set.subgames() as f64));
    ckpt.push(Block::scalar("victims", set.partition.victims() as f64));
    for (i, subs) in set.agents.iter().enumerate() {
        for (k, sub) in subs.iter().enumerate() {
            push_mlp(&mut ckpt, &format!("agent{i}/sub{k}/actor"), &sub.actor);
            ckpt.push(Block::scalar(
                format!("agent{i}/sub{k}/pm"),
                sub.pm.unwrap_or(f64::NAN),
            ));
        }
    }
    ckpt.save(path)
        .with_context(|| format!("saving subpolicy set {}", path.display()))?;
    Ok(())
}

pub fn load_subpolicy_set(path: &Path) -> Result<SubpolicySet> {
    let ckpt = Checkpoint::load(path)
        .with_context(|| format!("loading subpolicy set {}", path.display()))?;
    decode_subpolicy_set(&ckpt).with_context(|| format!("decoding {}", path.display()))
}

fn decode_subpolicy_set(ckpt: &Checkpoint) -> Result<SubpolicySet> {
    if ckpt.find("subpolicy_set").is_none() {
        bail!("not a subpolicy-set checkpoint");
    }
    let algorithm = Algorithm::parse(&ckpt.algorithm).map_err(|e| anyhow::anyhow!("{e}"))?;
    let scalar = |name: &str| -> Result<f64> {
        Ok(ckpt
            .require(name)
            .map_err(|e| anyhow::anyhow!("{e}"))?
            .data[0])
    };
    let adversaries = scalar("adversaries")? as usize;
    let subgames = scalar("subgames")? as usize;
    let victims = scalar("victims")? as usize;
    let partition =
        SubgamePartition::new(victims, subgames).map_err(|e| anyhow::anyhow!("{e}"))?;
    let mut agents = Vec::with_capacity(adversaries);
    for i in 0..adversaries {
        let mut subs = Vec::with_capacity(subgames);
        for k in 0..subgames {
            let actor = read_mlp(ckpt, &format!("agent{i}/sub{k}/actor"))
                .map_err(|e| anyhow::anyhow!("{e}"))?;
            let pm = scalar(&format!("agent{i}/sub{k}/pm"))?;
            subs.push(RetainedSubpolicy {
                actor,
                pm: if pm.is_nan() { None } else { Some(pm) },
            });
        }
        agents.push(subs);
    }
    Ok(SubpolicySet {
        algorithm,
        partition,
        agents,
    })
}

/// Save the end-of-training online learner grid so attacks can be resumed or
/// inspected; lives next to the deployable set.
pub fn save_learner_grid(
    path: &Path,
    algorithm: Algorithm,
    grid: &[Vec<AgentLearner>],
) -> Result<()> {
    let mut ckpt = Checkpoint::new(algorithm.as_str());
    ckpt.push(Block::scalar("learner_grid", 1.0));
    ckpt.push(Block::scalar("adversaries", grid.len() as f64));
    ckpt.push(Block::scalar(
        "subgames",
        grid.first().map(|g| g.len()).unwrap_or(0) as f64,
    ));
    for (i, subs) in grid.iter().enumerate() {
        for (k, learner) in subs.iter().enumerate() {
            push_learner(&mut ckpt, &format!("agent{i}/sub{k}"), learner);
        }
    }
    ckpt.save(path)
        .with_context(|| format!("saving learner grid {}", path.display()))?;
    Ok(())
}

pub fn load_learner_grid(path: &Path) -> Result<Vec<Vec<AgentLearner>>> {
    let ckpt = Checkpoint::load(path)?;
    if ckpt.find("learner_grid").is_none() {
        bail!("{} is not a learner-grid checkpoint", path.display());
    }
    let adversaries = ckpt.require("adversaries").map_err(|e| anyhow::anyhow!("{e}"))?.data[0] as usize;
    let subgames = ckpt.require("subgames").map_err(|e| anyhow::anyhow!("{e}"))?.data[0] as usize;
    let mut grid = Vec::with_capacity(adversaries);
    for i in 0..adversaries {
        let mut subs = Vec::with_capacity(subgames);
        for k in 0..subgames {
            subs.push(
                read_learner(&ckpt, &format!("agent{i}/sub{k}"))
                    .map_err(|e| anyhow::anyhow!("{e}"))?,
            );
        }
        grid.push(subs);
    }
    Ok(grid)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct HeuristicDescriptor {
    pub kind: String,
    pub speed_scale: f64,
}

pub fn save_heuristic(path: &Path, speed_scale: f64) -> Result<()> {
    let descriptor = HeuristicDescriptor {
        kind: "heuristic".into(),
        speed_scale,
    };
    std::fs::write(path, serde_json::to_string_pretty(&descriptor)?)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Any adversary-side policy artifact the evaluator can load.
pub enum AdversaryArtifact {
    Heuristic { speed_scale: f64 },
    Team(Vec<AgentLearner>),
    Set(SubpolicySet),
}

pub fn load_adversary(path: &Path) -> Result<AdversaryArtifact> {
    if path.extension().map(|e| e == "json").unwrap_or(false) {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        let descriptor: HeuristicDescriptor = serde_json::from_str(&text)?;
        if descriptor.kind != "heuristic" {
            bail!("unknown adversary descriptor kind '{}'", descriptor.kind);
        }
        return Ok(AdversaryArtifact::Heuristic {
            speed_scale: descriptor.speed_scale,
        });
    }
    let ckpt = Checkpoint::load(path)
        .with_context(|| format!("loading adversary checkpoint {}", path.display()))?;
    if ckpt.find("subpolicy_set").is_some() {
        Ok(AdversaryArtifact::Set(decode_subpolicy_set(&ckpt)?))
    } else if ckpt.find("team_size").is_some() {
        Ok(AdversaryArtifact::Team(
            read_team(&ckpt).map_err(|e| anyhow::anyhow!("{e}"))?,
        ))
    } else {
        bail!("{} holds neither a team nor a subpolicy set", path.display());
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PoolManifest {
    pub checkpoints: Vec<PathBuf>,
}

impl PoolManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)
            .with_context(|| format!("writing pool manifest {}", path.display()))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading pool manifest {}", path.display()))?;
        serde_json::from_str(&text).context("parsing pool manifest")
    }

    /// Resolve relative checkpoint paths against the manifest's directory.
    pub fn resolved(&self, manifest_path: &Path) -> Vec<PathBuf> {
        let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
        self.checkpoints
            .iter()
            .map(|p| if p.is_absolute() { p.clone() } else { base.join(p) })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use subplay_core::learner::Head;
    use subplay_core::rng::stream;

    #[test]
    fn subpolicy_set_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("set.ckpt");
        let partition = SubgamePartition::new(3, 4).unwrap();
        let agents = (0..2)
            .map(|i| {
                (0..4)
                    .map(|k| RetainedSubpolicy {
                        actor: MlpParams::xavier(
                            10,
                            2,
                            Head::Tanh,
                            &mut stream(1, "a", (i * 4 + k) as u64),
                        ),
                        pm: if k % 2 == 0 { Some(0.5 + k as f64) } else { None },
                    })
                    .collect::<Vec<_>>()
            })
            .collect::<Vec<_>>();
        let set = SubpolicySet {
            algorithm: Algorithm::Maddpg,
            partition,
            agents,
        };
        save_subpolicy_set(&path, &set).unwrap();
        match load_adversary(&path).unwrap() {
            AdversaryArtifact::Set(loaded) => {
                assert_eq!(loaded.adversaries(), 2);
                assert_eq!(loaded.subgames(), 4);
                for (a, b) in set.agents.iter().zip(&loaded.agents) {
                    for (x, y) in a.iter().zip(b) {
                        assert_eq!(x.actor, y.actor);
                        assert_eq!(x.pm, y.pm);
                    }
                }
            }
            _ => panic!("expected a subpolicy set"),
        }
    }

    #[test]
    fn heuristic_descriptor_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("heuristic.json");
        save_heuristic(&path, 0.8).unwrap();
        match load_adversary(&path).unwrap() {
            AdversaryArtifact::Heuristic { speed_scale } => assert_eq!(speed_scale, 0.8),
            _ => panic!("expected heuristic"),
        }
    }
}

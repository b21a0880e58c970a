//! Binary checkpoint format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic     4 bytes  "SPLY"
//! version   u32      currently 1
//! algorithm u16 len + utf8   ("ddpg", "maddpg", or "raw")
//! blocks    u32 count, then per block:
//!   name    u16 len + utf8
//!   ndim    u8
//!   dims    u32 per dim
//!   data    f64 per element (product of dims)
//! ```
//!
//! Round-trips are bit-exact; loading validates magic, version, and element
//! counts. Learners serialise as named blocks (`actor/w1`, `critic_opt/m/w1`,
//! ...) so a checkpoint can resume training, not just act.

use crate::error::{Error, Result};
use crate::learner::{AdamState, AgentLearner, Algorithm, Head, MlpParams, ACTION_DIM};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"SPLY";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub name: String,
    pub dims: Vec<u32>,
    pub data: Vec<f64>,
}

impl Block {
    pub fn new(name: impl Into<String>, dims: Vec<u32>, data: Vec<f64>) -> Self {
        let block = Block {
            name: name.into(),
            dims,
            data,
        };
        debug_assert_eq!(block.element_count(), block.data.len());
        block
    }

    pub fn scalar(name: impl Into<String>, value: f64) -> Self {
        Block::new(name, vec![1], vec![value])
    }

    fn element_count(&self) -> usize {
        self.dims.iter().map(|d| *d as usize).product()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub algorithm: String,
    pub blocks: Vec<Block>,
}

impl Checkpoint {
    pub fn new(algorithm: impl Into<String>) -> Self {
        Checkpoint {
            algorithm: algorithm.into(),
            blocks: Vec::new(),
        }
    }

    pub fn push(&mut self, block: Block) {
        self.blocks.push(block);
    }

    pub fn find(&self, name: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn require(&self, name: &str) -> Result<&Block> {
        self.find(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing block: {name}")))
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        write_str(w, &self.algorithm)?;
        w.write_all(&(self.blocks.len() as u32).to_le_bytes())?;
        for block in &self.blocks {
            write_str(w, &block.name)?;
            w.write_all(&[block.dims.len() as u8])?;
            for d in &block.dims {
                w.write_all(&d.to_le_bytes())?;
            }
            for v in &block.data {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = read_u32(r)?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let algorithm = read_str(r)?;
        let count = read_u32(r)? as usize;
        let mut blocks = Vec::with_capacity(count);
        for _ in 0..count {
            let name = read_str(r)?;
            let mut ndim = [0u8; 1];
            r.read_exact(&mut ndim)?;
            let mut dims = Vec::with_capacity(ndim[0] as usize);
            for _ in 0..ndim[0] {
                dims.push(read_u32(r)?);
            }
            let elements = dims.iter().map(|d| *d as usize).product::<usize>();
            let mut data = Vec::with_capacity(elements);
            let mut buf = [0u8; 8];
            for _ in 0..elements {
                r.read_exact(&mut buf)?;
                data.push(f64::from_le_bytes(buf));
            }
            blocks.push(Block { name, dims, data });
        }
        Ok(Checkpoint { algorithm, blocks })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut file)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
        Checkpoint::read_from(&mut file)
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn write_str(w: &mut impl Write, s: &str) -> Result<()> {
    let bytes = s.as_bytes();
    if bytes.len() > u16::MAX as usize {
        return Err(Error::Checkpoint("string too long".into()));
    }
    w.write_all(&(bytes.len() as u16).to_le_bytes())?;
    w.write_all(bytes)?;
    Ok(())
}

fn read_str(r: &mut impl Read) -> Result<String> {
    let mut len = [0u8; 2];
    r.read_exact(&mut len)?;
    let mut bytes = vec![0u8; u16::from_le_bytes(len) as usize];
    r.read_exact(&mut bytes)?;
    String::from_utf8(bytes).map_err(|_| Error::Checkpoint("invalid utf8".into()))
}

/// Append one MLP's tensors under `prefix/` (e.g. `agent0/actor`).
pub fn push_mlp(ckpt: &mut Checkpoint, prefix: &str, params: &MlpParams) {
    for (name, data) in params.tensors() {
        let dims = params.tensor_shape(name).expect("known tensor");
        ckpt.push(Block::new(format!("{prefix}/{name}"), dims, data.to_vec()));
    }
    ckpt.push(Block::scalar(
        format!("{prefix}/head"),
        match params.head {
            Head::Tanh => 1.0,
            Head::Linear => 0.0,
        },
    ));
}

/// Read one MLP back from `prefix/`.
pub fn read_mlp(ckpt: &Checkpoint, prefix: &str) -> Result<MlpParams> {
    let head = if ckpt.require(&format!("{prefix}/head"))?.data[0] == 1.0 {
        Head::Tanh
    } else {
        Head::Linear
    };
    let w1 = ckpt.require(&format!("{prefix}/w1"))?;
    let in_dim = w1.dims[1] as usize;
    let w_out = ckpt.require(&format!("{prefix}/w_out"))?;
    let out_dim = w_out.dims[0] as usize;
    let tensor = |name: &str| -> Result<Vec<f64>> {
        Ok(ckpt.require(&format!("{prefix}/{name}"))?.data.clone())
    };
    let params = MlpParams {
        in_dim,
        out_dim,
        head,
        w1: tensor("w1")?,
        b1: tensor("b1")?,
        w2: tensor("w2")?,
        b2: tensor("b2")?,
        w_out: tensor("w_out")?,
        b_out: tensor("b_out")?,
    };
    Ok(params)
}

fn push_adam(ckpt: &mut Checkpoint, prefix: &str, params: &MlpParams, state: &AdamState) {
    for (name, data) in state.m.tensors() {
        let dims = params.tensor_shape(name).expect("known tensor");
        ckpt.push(Block::new(format!("{prefix}/m/{name}"), dims, data.to_vec()));
    }
    for (name, data) in state.v.tensors() {
        let dims = params.tensor_shape(name).expect("known tensor");
        ckpt.push(Block::new(format!("{prefix}/v/{name}"), dims, data.to_vec()));
    }
    ckpt.push(Block::scalar(format!("{prefix}/t"), state.t as f64));
    ckpt.push(Block::scalar(format!("{prefix}/lr"), state.lr));
}

fn read_adam(ckpt: &Checkpoint, prefix: &str, params: &MlpParams) -> Result<AdamState> {
    let mut state = AdamState::new(params);
    for (i, name) in ["w1", "b1", "w2", "b2", "w_out", "b_out"].into_iter().enumerate() {
        *state.m.tensor_mut(i) = ckpt.require(&format!("{prefix}/m/{name}"))?.data.clone();
        *state.v.tensor_mut(i) = ckpt.require(&format!("{prefix}/v/{name}"))?.data.clone();
    }
    state.t = ckpt.require(&format!("{prefix}/t"))?.data[0] as u64;
    state.lr = ckpt.require(&format!("{prefix}/lr"))?.data[0];
    Ok(state)
}

/// Serialise a full learner (networks, targets, optimizer state) under
/// `prefix/`.
pub fn push_learner(ckpt: &mut Checkpoint, prefix: &str, learner: &AgentLearner) {
    push_mlp(ckpt, &format!("{prefix}/actor"), &learner.actor);
    push_mlp(ckpt, &format!("{prefix}/critic"), &learner.critic);
    push_mlp(ckpt, &format!("{prefix}/actor_target"), &learner.actor_target);
    push_mlp(ckpt, &format!("{prefix}/critic_target"), &learner.critic_target);
    push_adam(ckpt, &format!("{prefix}/actor_opt"), &learner.actor, &learner.actor_opt);
    push_adam(ckpt, &format!("{prefix}/critic_opt"), &learner.critic, &learner.critic_opt);
    ckpt.push(Block::scalar(format!("{prefix}/gamma"), learner.gamma));
    ckpt.push(Block::scalar(format!("{prefix}/ema_decay"), learner.ema_decay));
    ckpt.push(Block::scalar(format!("{prefix}/noise_std"), learner.noise_std));
    ckpt.push(Block::scalar(
        format!("{prefix}/member_index"),
        learner.member_index as f64,
    ));
    ckpt.push(Block::new(
        format!("{prefix}/team_obs_dims"),
        vec![learner.team_obs_dims.len() as u32],
        learner.team_obs_dims.iter().map(|d| *d as f64).collect(),
    ));
}

pub fn read_learner(ckpt: &Checkpoint, prefix: &str) -> Result<AgentLearner> {
    let algorithm = Algorithm::parse(&ckpt.algorithm)?;
    let actor = read_mlp(ckpt, &format!("{prefix}/actor"))?;
    let critic = read_mlp(ckpt, &format!("{prefix}/critic"))?;
    let actor_target = read_mlp(ckpt, &format!("{prefix}/actor_target"))?;
    let critic_target = read_mlp(ckpt, &format!("{prefix}/critic_target"))?;
    let actor_opt = read_adam(ckpt, &format!("{prefix}/actor_opt"), &actor)?;
    let critic_opt = read_adam(ckpt, &format!("{prefix}/critic_opt"), &critic)?;
    let member_index = ckpt.require(&format!("{prefix}/member_index"))?.data[0] as usize;
    let team_obs_dims: Vec<usize> = ckpt
        .require(&format!("{prefix}/team_obs_dims"))?
        .data
        .iter()
        .map(|d| *d as usize)
        .collect();
    if actor.out_dim != ACTION_DIM {
        return Err(Error::Checkpoint("actor head is not action-sized".into()));
    }
    let learner = AgentLearner {
        algorithm,
        member_index,
        team_obs_dims,
        gamma: ckpt.require(&format!("{prefix}/gamma"))?.data[0],
        ema_decay: ckpt.require(&format!("{prefix}/ema_decay"))?.data[0],
        noise_std: ckpt.require(&format!("{prefix}/noise_std"))?.data[0],
        actor,
        critic,
        actor_target,
        critic_target,
        actor_opt,
        critic_opt,
    };
    Ok(learner)
}

/// Serialise a whole team of learners as `agent{i}/...` blocks.
pub fn team_checkpoint(algorithm: Algorithm, learners: &[AgentLearner]) -> Checkpoint {
    let mut ckpt = Checkpoint::new(algorithm.as_str());
    ckpt.push(Block::scalar("team_size", learners.len() as f64));
    for (i, learner) in learners.iter().enumerate() {
        push_learner(&mut ckpt, &format!("agent{i}"), learner);
    }
    ckpt
}

pub fn read_team(ckpt: &Checkpoint) -> Result<Vec<AgentLearner>> {
    let size = ckpt.require("team_size")?.data[0] as usize;
    (0..size).map(|i| read_learner(ckpt, &format!("agent{i}"))).collect()
}

/// Group every block name by its top-level prefix. Used by loaders to
/// distinguish team checkpoints from subpolicy-set checkpoints.
pub fn block_index(ckpt: &Checkpoint) -> BTreeMap<String, usize> {
    let mut map = BTreeMap::new();
    for block in &ckpt.blocks {
        let top = block.name.split('/').next().unwrap_or("").to_string();
        *map.entry(top).or_insert(0) += 1;
    }
    map
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn round_trip_is_bit_exact() {
        let learners: Vec<AgentLearner> = (0..2)
            .map(|i| {
                AgentLearner::new(
                    Algorithm::Maddpg,
                    i,
                    &[7, 9],
                    &mut stream(3, "init", i as u64),
                )
            })
            .collect();
        let ckpt = team_checkpoint(Algorithm::Maddpg, &learners);
        let mut bytes = Vec::new();
        ckpt.write_to(&mut bytes).unwrap();
        let loaded = Checkpoint::read_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(ckpt, loaded);
        let team = read_team(&loaded).unwrap();
        for (a, b) in learners.iter().zip(&team) {
            assert_eq!(a.actor, b.actor);
            assert_eq!(a.critic_target, b.critic_target);
            assert_eq!(a.actor_opt.t, b.actor_opt.t);
            assert_eq!(a.team_obs_dims, b.team_obs_dims);
        }

        // Saving the loaded checkpoint again reproduces the same bytes.
        let mut bytes2 = Vec::new();
        loaded.write_to(&mut bytes2).unwrap();
        assert_eq!(bytes, bytes2);
    }

    #[test]
    fn corrupt_headers_are_rejected() {
        let ckpt = Checkpoint::new("ddpg");
        let mut bytes = Vec::new();
        ckpt.write_to(&mut bytes).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::read_from(&mut bad.as_slice()).is_err());
        let mut bad = bytes.clone();
        bad[4] = 99;
        assert!(Checkpoint::read_from(&mut bad.as_slice()).is_err());
        bytes.truncate(6);
        assert!(Checkpoint::read_from(&mut bytes.as_slice()).is_err());
    }
}

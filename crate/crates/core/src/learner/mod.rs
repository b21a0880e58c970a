//! Minimal actor-critic stack: MLPs with manual backprop, Adam, EMA targets,
//! replay buffers, and the DDPG/MADDPG update rules. All arithmetic is f64.

mod adam;
mod agent;
mod buffer;
mod mlp;

pub use adam::AdamState;
pub use agent::{ddpg_update, maddpg_update, AgentLearner, Algorithm, LossReport, ACTION_DIM};
pub use buffer::{ReplayBuffer, Transition};
pub use mlp::{ema_update, ForwardCache, Head, MlpGrads, MlpParams, HIDDEN};

/// Replay sizing used by victim teams (one shared buffer per team).
pub const VICTIM_BUFFER_CAPACITY: usize = 200_000;
pub const VICTIM_BATCH_SIZE: usize = 1024;
/// Replay sizing used by each adversary agent (per subgame).
pub const ADVERSARY_BUFFER_CAPACITY: usize = 512;
pub const ADVERSARY_BATCH_SIZE: usize = 512;

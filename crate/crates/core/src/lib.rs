//! Desk-scale laboratory for adversarial policies against partially observed
//! multi-agent reinforcement learning.
//!
//! The crate is organised around the attack pipeline:
//!
//! * [`engine`] — deterministic 2D particle physics and the two competitive
//!   environments (predator-prey, world communication).
//! * [`observe`] — partial-observability masking and subgame classification.
//! * [`learner`] — minimal actor-critic stack: MLPs with manual backprop,
//!   Adam, EMA targets, replay buffers, DDPG/MADDPG updates.
//! * [`subplay`] — subgame occupancy estimation, transition dissemination,
//!   subpolicy training with policy meritocracy, and policy combination.
//! * [`opponents`] — comparison attackers and the victim-production pipeline
//!   (heuristic baseline, self-play, victim-play).
//! * [`evalkit`] — metrics, the evaluation runner, defenses, and activation
//!   export.
//!
//! All randomness flows through named [`rng`] streams derived from a master
//! seed, so every training run and evaluation is bit-reproducible.

pub mod checkpoint;
pub mod engine;
pub mod error;
pub mod evalkit;
pub mod learner;
pub mod observe;
pub mod opponents;
pub mod rng;
pub mod rollout;
pub mod subplay;

pub use error::{Error, Result};

//! Named, seeded random streams.
//!
//! A single master seed fans out into independent substreams addressed by
//! `(name, index)`. The derivation is `ChaCha12(SHA-256(master || name || index))`,
//! so enabling or disabling one consumer (dissemination coins, meritocracy
//! evaluations, ...) never perturbs the draws seen by any other consumer.
//! This is what makes the degenerate-attack and two-process determinism
//! checks byte-exact.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

/// The single RNG type used everywhere in the crate.
pub type RngStream = ChaCha12Rng;

/// Derive the substream identified by `(name, index)` from a master seed.
pub fn stream(master: u64, name: &str, index: u64) -> RngStream {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(name.as_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha12Rng::from_seed(seed)
}

/// Substream index for the network of agent `member` in subgame `subgame`.
///
/// Victim-play uses subgame 0, which is exactly the index the degenerate
/// one-subgame attack uses, so both initialise identical parameters.
pub fn net_index(member: usize, subgame: usize) -> u64 {
    ((member as u64) << 32) | (subgame as u64)
}

/// Derive a fresh master seed for a nested consumer (e.g. one meritocracy
/// evaluation), so its own substreams stay independent of everything else.
pub fn child_seed(master: u64, name: &str, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(name.as_bytes());
    hasher.update(index.to_le_bytes());
    hasher.update(b"child");
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Standard normal draw via Box-Muller.
///
/// Hand-rolled so the bit-level sequence depends only on the uniform stream,
/// not on a distributions crate's internals.
pub fn standard_normal(rng: &mut RngStream) -> f64 {
    // gen::<f64>() is uniform on [0, 1); shift away from zero for the log.
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

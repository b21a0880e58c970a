//! Partial-observability masking and subgame classification.
//!
//! An adversary agent's observation is multiplied elementwise with a 0/1 mask.
//! Visibility is decided per victim agent — either all of a victim's slots
//! (relative position and velocity) are present or all are zeroed. The mask,
//! not the masked observation, drives subgame classification, so a victim at
//! relative position exactly zero is never confused with a masked one.

use crate::engine::{Env, Side, WorldState};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use rand::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LimitationKind {
    None,
    Uncertainty,
    Distance,
    Region,
}

impl LimitationKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            LimitationKind::None => "none",
            LimitationKind::Uncertainty => "uncertainty",
            LimitationKind::Distance => "distance",
            LimitationKind::Region => "region",
        }
    }
}

/// The cause and strength of partial observability.
#[derive(Clone, Copy, Debug)]
pub struct Limitation {
    pub kind: LimitationKind,
    /// Per-victim drop probability (uncertainty kind).
    pub uncertainty_rate: f64,
    /// Perception radius (distance kind).
    pub observable_distance: f64,
    /// Extra independent drop applied on top of any kind.
    pub proactive_mask_rate: f64,
}

impl Limitation {
    pub fn none() -> Self {
        Limitation {
            kind: LimitationKind::None,
            uncertainty_rate: 0.0,
            observable_distance: 0.0,
            proactive_mask_rate: 0.0,
        }
    }

    pub fn uncertainty(rate: f64) -> Self {
        Limitation {
            kind: LimitationKind::Uncertainty,
            uncertainty_rate: rate,
            ..Limitation::none()
        }
    }

    pub fn distance(observable: f64) -> Self {
        Limitation {
            kind: LimitationKind::Distance,
            observable_distance: observable,
            ..Limitation::none()
        }
    }

    pub fn region() -> Self {
        Limitation {
            kind: LimitationKind::Region,
            ..Limitation::none()
        }
    }

    pub fn with_proactive(mut self, rate: f64) -> Self {
        self.proactive_mask_rate = rate;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.uncertainty_rate) {
            return Err(Error::contract("uncertainty_rate must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.proactive_mask_rate) {
            return Err(Error::contract("proactive_mask_rate must lie in [0, 1]"));
        }
        if self.kind == LimitationKind::Distance && self.observable_distance <= 0.0 {
            return Err(Error::contract("observable_distance must be positive"));
        }
        Ok(())
    }
}

/// 0/1 vector with the same layout as the observation it masks, plus the
/// per-victim visibility it encodes.
#[derive(Clone, Debug, PartialEq)]
pub struct Mask {
    pub bits: Vec<f64>,
    pub visible_victims: Vec<bool>,
}

impl Mask {
    pub fn visible_count(&self) -> usize {
        self.visible_victims.iter().filter(|v| **v).count()
    }
}

/// Build the mask for adversary agent `agent` under `limitation`.
///
/// Draw order is fixed: one uniform per victim for the uncertainty kind, then
/// one per victim for the proactive drop (only when its rate is nonzero).
pub fn make_mask(
    env: &Env,
    state: &WorldState,
    agent: usize,
    limitation: &Limitation,
    noise: &mut RngStream,
) -> Mask {
    let n = env.config.victims;
    let layout = env.obs_layout(Side::Adversary, agent);
    let mut visible = vec![true; n];
    match limitation.kind {
        LimitationKind::None => {}
        LimitationKind::Uncertainty => {
            for v in visible.iter_mut() {
                if noise.gen::<f64>() < limitation.uncertainty_rate {
                    *v = false;
                }
            }
        }
        LimitationKind::Distance => {
            let me = state.positions[env.prey_entity(agent)];
            for (j, v) in visible.iter_mut().enumerate() {
                let p = state.positions[env.predator_entity(j)];
                let dist = ((p[0] - me[0]).powi(2) + (p[1] - me[1]).powi(2)).sqrt();
                if dist > limitation.observable_distance {
                    *v = false;
                }
            }
        }
        LimitationKind::Region => {
            for (j, v) in visible.iter_mut().enumerate() {
                if env.in_forest(state, env.predator_entity(j)) {
                    *v = false;
                }
            }
        }
    }
    if limitation.proactive_mask_rate > 0.0 {
        for v in visible.iter_mut() {
            if noise.gen::<f64>() < limitation.proactive_mask_rate {
                *v = false;
            }
        }
    }
    let mut bits = vec![1.0; layout.dim];
    for (j, v) in visible.iter().enumerate() {
        if !*v {
            for d in layout.opponent_pos_slot(j).chain(layout.opponent_vel_slot(j)) {
                bits[d] = 0.0;
            }
        }
    }
    Mask {
        bits,
        visible_victims: visible,
    }
}

/// Elementwise product of observation and mask.
pub fn apply_mask(observation: &[f64], mask: &Mask) -> Result<Vec<f64>> {
    if observation.len() != mask.bits.len() {
        return Err(Error::dims(mask.bits.len(), observation.len(), "apply_mask"));
    }
    Ok(observation
        .iter()
        .zip(mask.bits.iter())
        .map(|(o, m)| o * m)
        .collect())
}

/// Contiguous near-equal-width partition of the visible-victim counts
/// `{0..N}` into `Sub` buckets. With `Sub = N + 1` every bucket is a
/// singleton; a remainder widens the highest buckets.
#[derive(Clone, Debug, PartialEq)]
pub struct SubgamePartition {
    /// bucket index per visible count, length N + 1.
    bucket_of_count: Vec<usize>,
    buckets: usize,
}

impl SubgamePartition {
    pub fn new(victims: usize, subgames: usize) -> Result<Self> {
        let counts = victims + 1;
        if subgames < 1 || subgames > counts {
            return Err(Error::contract(format!(
                "subgames must lie in [1, {counts}], got {subgames}"
            )));
        }
        let base = counts / subgames;
        let rem = counts % subgames;
        let mut bucket_of_count = Vec::with_capacity(counts);
        for k in 0..subgames {
            let width = if k >= subgames - rem { base + 1 } else { base };
            for _ in 0..width {
                bucket_of_count.push(k);
            }
        }
        debug_assert_eq!(bucket_of_count.len(), counts);
        Ok(SubgamePartition {
            bucket_of_count,
            buckets: subgames,
        })
    }

    pub fn fine(victims: usize) -> Self {
        SubgamePartition::new(victims, victims + 1).expect("N+1 buckets always valid")
    }

    pub fn subgames(&self) -> usize {
        self.buckets
    }

    pub fn victims(&self) -> usize {
        self.bucket_of_count.len() - 1
    }

    pub fn bucket_of_count(&self, visible: usize) -> usize {
        self.bucket_of_count[visible]
    }

    /// Visible counts contained in bucket `k`.
    pub fn counts_in_bucket(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        self.bucket_of_count
            .iter()
            .enumerate()
            .filter(move |(_, b)| **b == k)
            .map(|(c, _)| c)
    }
}

/// Subgame index for a mask under the given granularity.
pub fn classify_subgame(mask: &Mask, partition: &SubgamePartition) -> usize {
    partition.bucket_of_count(mask.visible_count())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::EnvConfig;
    use crate::rng::stream;

    fn env_1v3() -> Env {
        Env::new(EnvConfig::predator_prey(1, 3)).unwrap()
    }

    #[test]
    fn zero_rate_is_identity() {
        let env = env_1v3();
        let state = env.reset(&mut stream(0, "env", 0));
        let mask = make_mask(&env, &state, 0, &Limitation::uncertainty(0.0), &mut stream(0, "m", 0));
        assert!(mask.bits.iter().all(|b| *b == 1.0));
        assert_eq!(mask.visible_count(), 3);
    }

    #[test]
    fn full_rate_drops_every_victim() {
        let env = env_1v3();
        let state = env.reset(&mut stream(1, "env", 0));
        let mask = make_mask(&env, &state, 0, &Limitation::uncertainty(1.0), &mut stream(1, "m", 0));
        assert_eq!(mask.visible_count(), 0);
        let layout = env.obs_layout(Side::Adversary, 0);
        for j in 0..3 {
            for d in layout.opponent_pos_slot(j).chain(layout.opponent_vel_slot(j)) {
                assert_eq!(mask.bits[d], 0.0);
            }
        }
        // Non-victim slots stay 1.
        for d in 0..layout.opponents_pos.start {
            assert_eq!(mask.bits[d], 1.0);
        }
    }

    #[test]
    fn distance_threshold() {
        let env = env_1v3();
        let mut state = env.reset(&mut stream(2, "env", 0));
        state.positions[env.prey_entity(0)] = [0.0, 0.0];
        state.positions[env.predator_entity(0)] = [0.49, 0.0];
        state.positions[env.predator_entity(1)] = [0.51, 0.0];
        state.positions[env.predator_entity(2)] = [0.0, 0.5];
        let mask = make_mask(&env, &state, 0, &Limitation::distance(0.5), &mut stream(2, "m", 0));
        assert_eq!(mask.visible_victims, vec![true, false, true]);
    }

    #[test]
    fn apply_mask_matches_oracle_product() {
        let env = env_1v3();
        let state = env.reset(&mut stream(3, "env", 0));
        let obs = env.observation(&state, Side::Adversary, 0);
        let mask = make_mask(&env, &state, 0, &Limitation::uncertainty(0.5), &mut stream(3, "m", 0));
        let got = apply_mask(&obs, &mask).unwrap();
        for d in 0..obs.len() {
            assert_eq!(got[d], obs[d] * mask.bits[d]);
        }
        // Identity and annihilation corners.
        let all_ones = make_mask(&env, &state, 0, &Limitation::none(), &mut stream(3, "m", 1));
        assert_eq!(apply_mask(&obs, &all_ones).unwrap(), obs);
        assert!(apply_mask(&obs[1..], &mask).is_err());
    }

    #[test]
    fn partition_shapes() {
        let p = SubgamePartition::new(3, 4).unwrap();
        assert_eq!((0..4).map(|c| p.bucket_of_count(c)).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
        let p = SubgamePartition::new(3, 1).unwrap();
        assert_eq!((0..4).map(|c| p.bucket_of_count(c)).collect::<Vec<_>>(), vec![0, 0, 0, 0]);
        let p = SubgamePartition::new(3, 2).unwrap();
        assert_eq!((0..4).map(|c| p.bucket_of_count(c)).collect::<Vec<_>>(), vec![0, 0, 1, 1]);
        // Nine counts into three buckets of three.
        let p = SubgamePartition::new(8, 3).unwrap();
        assert_eq!(p.bucket_of_count(4), 1);
        assert_eq!(p.bucket_of_count(2), 0);
        assert_eq!(p.bucket_of_count(6), 2);
        assert!(SubgamePartition::new(3, 5).is_err());
        assert!(SubgamePartition::new(3, 0).is_err());
    }

    #[test]
    fn classification_counts_visible_victims() {
        let env = env_1v3();
        let state = env.reset(&mut stream(4, "env", 0));
        let partition = SubgamePartition::fine(3);
        let all = make_mask(&env, &state, 0, &Limitation::none(), &mut stream(4, "m", 0));
        assert_eq!(classify_subgame(&all, &partition), 3);
        let none = make_mask(&env, &state, 0, &Limitation::uncertainty(1.0), &mut stream(4, "m", 1));
        assert_eq!(classify_subgame(&none, &partition), 0);
    }

    #[test]
    fn partition_covers_every_count_exactly_once() {
        for n in 1..=8 {
            for sub in 1..=n + 1 {
                let p = SubgamePartition::new(n, sub).unwrap();
                let mut seen = vec![0usize; sub];
                for c in 0..=n {
                    let k = p.bucket_of_count(c);
                    assert!(k < sub);
                    seen[k] += 1;
                }
                assert!(seen.iter().all(|s| *s > 0), "every bucket non-empty");
                assert_eq!(seen.iter().sum::<usize>(), n + 1);
                // Buckets are contiguous and sorted.
                for c in 1..=n {
                    let a = p.bucket_of_count(c - 1);
                    let b = p.bucket_of_count(c);
                    assert!(b == a || b == a + 1);
                }
            }
        }
    }

    #[test]
    fn empirical_drop_rate_matches_mu() {
        let env = env_1v3();
        let state = env.reset(&mut stream(5, "env", 0));
        let mut rng = stream(5, "m", 0);
        let limitation = Limitation::uncertainty(0.25);
        let trials = 100_000;
        let mut dropped = [0usize; 3];
        let mut count_hist = [0usize; 4];
        for _ in 0..trials {
            let mask = make_mask(&env, &state, 0, &limitation, &mut rng);
            for j in 0..3 {
                if !mask.visible_victims[j] {
                    dropped[j] += 1;
                }
            }
            count_hist[mask.visible_count()] += 1;
        }
        for j in 0..3 {
            let rate = dropped[j] as f64 / trials as f64;
            assert!((rate - 0.25).abs() < 0.01, "victim {j} drop rate {rate}");
        }
        // Visible-count distribution ~ Binomial(3, 0.75).
        let expected = [0.015625, 0.140625, 0.421875, 0.421875];
        for k in 0..4 {
            let freq = count_hist[k] as f64 / trials as f64;
            assert!((freq - expected[k]).abs() < 0.02, "bin {k}: {freq}");
        }
    }

    #[test]
    fn proactive_masking_stacks_on_distance() {
        let env = env_1v3();
        let mut state = env.reset(&mut stream(6, "env", 0));
        state.positions[env.prey_entity(0)] = [0.0, 0.0];
        for j in 0..3 {
            state.positions[env.predator_entity(j)] = [0.1 * (j as f64 + 1.0), 0.0];
        }
        let limitation = Limitation::distance(2.0).with_proactive(0.5);
        let mut rng = stream(6, "m", 0);
        let trials = 50_000;
        let mut visible = 0usize;
        for _ in 0..trials {
            visible += make_mask(&env, &state, 0, &limitation, &mut rng).visible_count();
        }
        let rate = visible as f64 / (3 * trials) as f64;
        assert!((rate - 0.5).abs() < 0.01, "visible rate {rate}");
    }

    #[test]
    fn enlarging_distance_never_hides_a_victim() {
        let env = env_1v3();
        let mut rng = stream(7, "env", 0);
        for _ in 0..50 {
            let state = env.reset(&mut rng);
            let mut prev = 0usize;
            for step in 1..=8 {
                let d = 0.35 * step as f64;
                let mask = make_mask(
                    &env,
                    &state,
                    0,
                    &Limitation::distance(d),
                    &mut stream(7, "m", 0),
                );
                let count = mask.visible_count();
                assert!(count >= prev, "visible count dropped when radius grew");
                prev = count;
            }
        }
    }
}

//! Transition dissemination between subgame replay buffers.
//!
//! Each agent keeps one replay buffer per subgame plus a dissemination table
//! of copy probabilities `DR[from][to]`. A transition always lands in its
//! source buffer; every other buffer receives an independent Bernoulli copy.

use super::occupancy::OccupancyVector;
use crate::learner::{ReplayBuffer, Transition};
use crate::rng::RngStream;
use rand::Rng;

/// Population standard deviation.
pub fn population_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

/// Square matrix of dissemination rates; `dr[from][to]`, diagonal 1.
#[derive(Clone, Debug, PartialEq)]
pub struct DisseminationTable {
    pub dr: Vec<Vec<f64>>,
    pub lambda: f64,
    pub sigma: f64,
}

impl DisseminationTable {
    /// No dissemination: identity diagonal, zero elsewhere.
    pub fn identity(subgames: usize) -> Self {
        let dr = (0..subgames)
            .map(|a| (0..subgames).map(|b| if a == b { 1.0 } else { 0.0 }).collect())
            .collect();
        DisseminationTable {
            dr,
            lambda: 0.0,
            sigma: 0.0,
        }
    }

    pub fn subgames(&self) -> usize {
        self.dr.len()
    }

    pub fn rate(&self, from: usize, to: usize) -> f64 {
        self.dr[from][to]
    }
}

/// Destination-rate rule. With `e = |from - to| / sqrt(Sub)`:
/// `(lambda - OR_to + sigma)^e` clipped to [0, 1] when `OR_to <= lambda`,
/// `sigma^e` otherwise. Exponent zero on the diagonal makes it exactly one.
pub fn build_dissemination_table(or: &OccupancyVector, lambda: f64) -> DisseminationTable {
    let sub = or.values.len();
    let sigma = population_std(&or.values);
    let root = (sub as f64).sqrt();
    let mut dr = vec![vec![0.0; sub]; sub];
    for (from, row) in dr.iter_mut().enumerate() {
        for (to, cell) in row.iter_mut().enumerate() {
            let exponent = (from as f64 - to as f64).abs() / root;
            let or_to = or.values[to];
            *cell = if or_to <= lambda {
                (lambda - or_to + sigma).powf(exponent).clamp(0.0, 1.0)
            } else {
                sigma.powf(exponent)
            };
        }
    }
    DisseminationTable { dr, lambda, sigma }
}

/// Per-agent, per-subgame replay buffers for the adversary team.
#[derive(Clone, Debug)]
pub struct BufferSet {
    buffers: Vec<Vec<ReplayBuffer>>,
}

impl BufferSet {
    pub fn new(agents: usize, subgames: usize, capacity: usize, batch: usize) -> Self {
        BufferSet {
            buffers: (0..agents)
                .map(|_| (0..subgames).map(|_| ReplayBuffer::new(capacity, batch)).collect())
                .collect(),
        }
    }

    pub fn agents(&self) -> usize {
        self.buffers.len()
    }

    pub fn subgames(&self) -> usize {
        self.buffers.first().map(|b| b.len()).unwrap_or(0)
    }

    pub fn get(&self, agent: usize, subgame: usize) -> &ReplayBuffer {
        &self.buffers[agent][subgame]
    }

    pub fn get_mut(&mut self, agent: usize, subgame: usize) -> &mut ReplayBuffer {
        &mut self.buffers[agent][subgame]
    }

    /// Per-subgame counts of directly stored (non-disseminated) transitions.
    pub fn source_counts(&self, agent: usize) -> Vec<u64> {
        self.buffers[agent]
            .iter()
            .map(|b| b.source_len() as u64)
            .collect()
    }

    pub fn lens(&self, agent: usize) -> Vec<usize> {
        self.buffers[agent].iter().map(|b| b.len()).collect()
    }
}

/// Where one routed transition was stored.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StoreReport {
    pub source: usize,
    pub copies: Vec<usize>,
}

/// Store `t` in its source buffer with certainty, then draw one independent
/// Bernoulli per other destination (one uniform each, in destination order,
/// drawn regardless of the rate so the coin stream's length is fixed).
pub fn route_transition(
    t: Transition,
    table: &DisseminationTable,
    buffers: &mut BufferSet,
    agent: usize,
    coin: &mut RngStream,
) -> StoreReport {
    let source = t.subgame;
    let mut report = StoreReport {
        source,
        copies: Vec::new(),
    };
    for to in 0..table.subgames() {
        if to == source {
            continue;
        }
        let u: f64 = coin.gen();
        if u < table.rate(source, to) {
            let mut copy = t.clone();
            copy.disseminated = true;
            buffers.get_mut(agent, to).push(copy);
            report.copies.push(to);
        }
    }
    buffers.get_mut(agent, source).push(t);
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subplay::occupancy::OccupancyMethod;
    use crate::rng::stream;

    fn transition(subgame: usize) -> Transition {
        Transition {
            obs: vec![vec![0.0]],
            actions: vec![[0.0, 0.0]],
            rewards: vec![0.0],
            next_obs: vec![vec![0.0]],
            mask: None,
            subgame,
            disseminated: false,
        }
    }

    fn worked_or() -> OccupancyVector {
        OccupancyVector {
            values: vec![0.04, 0.08, 0.24, 0.65],
            method: OccupancyMethod::StaticObservation,
        }
    }

    #[test]
    fn diagonal_is_exactly_one() {
        let table = build_dissemination_table(&worked_or(), 0.5);
        for k in 0..4 {
            assert_eq!(table.rate(k, k), 1.0);
        }
        for from in 0..4 {
            for to in 0..4 {
                let dr = table.rate(from, to);
                assert!((0.0..=1.0).contains(&dr));
            }
        }
    }

    #[test]
    fn worked_table_entries() {
        // sigma for the worked occupancy vector, computed directly.
        let table = build_dissemination_table(&worked_or(), 0.5);
        let sigma = {
            let vals = [0.04f64, 0.08, 0.24, 0.65];
            let mean = vals.iter().sum::<f64>() / 4.0;
            (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 4.0).sqrt()
        };
        assert!((table.sigma - sigma).abs() < 1e-15);
        // OR_3 > lambda branch: DR_{0->3} = sigma^{3/2} ~ 0.119.
        let want = sigma.powf(1.5);
        assert!((table.rate(0, 3) - want).abs() < 1e-15);
        assert!((table.rate(0, 3) - 0.119).abs() < 1e-3);
        // OR_0 <= lambda branch: DR_{3->0} = (0.5 - 0.04 + sigma)^{3/2} ~ 0.587.
        let want = (0.5 - 0.04 + sigma).powf(1.5);
        assert!((table.rate(3, 0) - want).abs() < 1e-15);
        assert!((table.rate(3, 0) - 0.587).abs() < 1e-3);
    }

    #[test]
    fn low_branch_is_monotone_in_or_and_distance() {
        // Fix sigma and Sub by hand-building vectors whose sigma matches.
        let or = worked_or();
        let table = build_dissemination_table(&or, 0.5);
        // Destinations 0, 1, 2 all sit in the OR <= lambda branch with a
        // base > 1 is false here (base < 1), so DR decreases with distance.
        assert!(table.rate(1, 0) >= table.rate(3, 0) - 1e-15);
        // Higher OR destination gets a lower rate at equal distance.
        assert!(table.rate(3, 2) <= table.rate(2, 1) + 1e-15);
        assert!(table.rate(0, 2) <= table.rate(0, 1));
    }

    #[test]
    fn identity_routing_stores_only_at_source() {
        let mut buffers = BufferSet::new(1, 4, 16, 4);
        let table = DisseminationTable::identity(4);
        let mut coin = stream(1, "coin", 0);
        let report = route_transition(transition(2), &table, &mut buffers, 0, &mut coin);
        assert_eq!(report, StoreReport { source: 2, copies: vec![] });
        assert_eq!(buffers.lens(0), vec![0, 0, 1, 0]);
        assert_eq!(buffers.source_counts(0), vec![0, 0, 1, 0]);
    }

    #[test]
    fn all_ones_routing_copies_everywhere() {
        let mut buffers = BufferSet::new(1, 3, 16, 4);
        let mut table = DisseminationTable::identity(3);
        for row in table.dr.iter_mut() {
            for v in row.iter_mut() {
                *v = 1.0;
            }
        }
        let mut coin = stream(2, "coin", 0);
        route_transition(transition(1), &table, &mut buffers, 0, &mut coin);
        assert_eq!(buffers.lens(0), vec![1, 1, 1]);
        // Only the source copy counts as non-disseminated.
        assert_eq!(buffers.source_counts(0), vec![0, 1, 0]);
    }

    #[test]
    fn routing_frequency_matches_table_probability() {
        let mut table = DisseminationTable::identity(2);
        table.dr[0][1] = 0.3;
        let mut coin = stream(3, "coin", 0);
        let trials = 100_000;
        let mut copies = 0usize;
        for _ in 0..trials {
            let mut buffers = BufferSet::new(1, 2, 4, 4);
            let report = route_transition(transition(0), &table, &mut buffers, 0, &mut coin);
            copies += report.copies.len();
            assert_eq!(buffers.get(0, 0).len(), 1);
        }
        let rate = copies as f64 / trials as f64;
        assert!((rate - 0.3).abs() < 0.01, "rate {rate}");
    }
}

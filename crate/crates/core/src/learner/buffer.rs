//! Transitions and FIFO replay buffers.

use crate::observe::Mask;
use crate::rng::RngStream;
use std::collections::VecDeque;

/// One stored interaction step, always carrying the owning team's full joint
/// context so the same record serves DDPG (own slices) and MADDPG (all
/// slices). `mask`/`subgame` are set for adversary-side transitions; the
/// subgame tag is the owning agent's classification at the time of acting.
#[derive(Clone, Debug)]
pub struct Transition {
    /// Per team member, the observation each member acted on.
    pub obs: Vec<Vec<f64>>,
    /// Per team member action.
    pub actions: Vec<[f64; 2]>,
    /// Per team member instantaneous reward.
    pub rewards: Vec<f64>,
    /// Per team member next observation.
    pub next_obs: Vec<Vec<f64>>,
    pub mask: Option<Mask>,
    pub subgame: usize,
    /// True when this copy arrived through dissemination rather than from
    /// direct interaction in its subgame.
    pub disseminated: bool,
}

/// Fixed-capacity FIFO ring of transitions.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    batch_size: usize,
    entries: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, batch_size: usize) -> Self {
        assert!(capacity >= 1 && batch_size >= 1);
        assert!(batch_size <= capacity, "batch cannot exceed capacity");
        ReplayBuffer {
            capacity,
            batch_size,
            entries: VecDeque::with_capacity(capacity + 1),
        }
    }

    pub fn push(&mut self, t: Transition) {
        self.entries.push_back(t);
        if self.entries.len() > self.capacity {
            self.entries.pop_front();
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn ready(&self) -> bool {
        self.entries.len() >= self.batch_size
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.entries[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.entries.iter()
    }

    /// Count of transitions that were stored by direct interaction (not
    /// dissemination copies).
    pub fn source_len(&self) -> usize {
        self.entries.iter().filter(|t| !t.disseminated).count()
    }

    /// Indices for one update batch. When the batch size equals the capacity
    /// the whole buffer is consumed in insertion order without sampling;
    /// otherwise a uniform sample without replacement is drawn.
    pub fn sample_indices(&self, rng: &mut RngStream) -> Option<Vec<usize>> {
        if !self.ready() {
            return None;
        }
        if self.batch_size == self.capacity {
            return Some((0..self.entries.len()).collect());
        }
        Some(
            rand::seq::index::sample(rng, self.entries.len(), self.batch_size).into_vec(),
        )
    }

    pub fn sample<'a>(&'a self, rng: &mut RngStream) -> Option<Vec<&'a Transition>> {
        self.sample_indices(rng)
            .map(|idx| idx.into_iter().map(|i| &self.entries[i]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn transition(tag: usize) -> Transition {
        Transition {
            obs: vec![vec![tag as f64]],
            actions: vec![[0.0, 0.0]],
            rewards: vec![0.0],
            next_obs: vec![vec![0.0]],
            mask: None,
            subgame: 0,
            disseminated: false,
        }
    }

    #[test]
    fn fifo_keeps_the_last_capacity_entries_in_order() {
        let mut buf = ReplayBuffer::new(8, 4);
        for i in 0..13 {
            buf.push(transition(i));
        }
        assert_eq!(buf.len(), 8);
        let tags: Vec<usize> = buf.iter().map(|t| t.obs[0][0] as usize).collect();
        assert_eq!(tags, (5..13).collect::<Vec<_>>());
    }

    #[test]
    fn whole_buffer_mode_skips_sampling() {
        let mut buf = ReplayBuffer::new(4, 4);
        assert!(buf.sample_indices(&mut stream(0, "s", 0)).is_none());
        for i in 0..4 {
            buf.push(transition(i));
        }
        let idx = buf.sample_indices(&mut stream(0, "s", 0)).unwrap();
        assert_eq!(idx, vec![0, 1, 2, 3]);
    }

    #[test]
    fn sampling_is_without_replacement_and_seeded() {
        let mut buf = ReplayBuffer::new(100, 10);
        for i in 0..50 {
            buf.push(transition(i));
        }
        let a = buf.sample_indices(&mut stream(9, "s", 0)).unwrap();
        let b = buf.sample_indices(&mut stream(9, "s", 0)).unwrap();
        assert_eq!(a, b);
        let mut sorted = a.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 10);
        assert!(sorted.iter().all(|i| *i < 50));
    }
}

//! Subgame occupancy-rate estimators.
//!
//! Three ways to decide how often each subgame occurs: a binomial prior over
//! visible-victim counts (static estimation), relative transition counts from
//! a pre-observation phase (static observation), and an exponentially
//! weighted average of per-episode frequencies (dynamic observation).

use crate::error::{Error, Result};
use crate::observe::SubgamePartition;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OccupancyMethod {
    StaticEstimation,
    StaticObservation,
    DynamicObservation,
}

impl OccupancyMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            OccupancyMethod::StaticEstimation => "static_estimation",
            OccupancyMethod::StaticObservation => "static_observation",
            OccupancyMethod::DynamicObservation => "dynamic_observation",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "static_estimation" => Ok(OccupancyMethod::StaticEstimation),
            "static_observation" => Ok(OccupancyMethod::StaticObservation),
            "dynamic_observation" => Ok(OccupancyMethod::DynamicObservation),
            other => Err(Error::contract(format!("unknown occupancy method: {other}"))),
        }
    }
}

/// Normalised per-subgame occurrence probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyVector {
    pub values: Vec<f64>,
    pub method: OccupancyMethod,
}

impl OccupancyVector {
    pub fn uniform(subgames: usize, method: OccupancyMethod) -> Self {
        OccupancyVector {
            values: vec![1.0 / subgames as f64; subgames],
            method,
        }
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn renormalize(&mut self) {
        let s = self.sum();
        if s > 0.0 {
            for v in self.values.iter_mut() {
                *v /= s;
            }
        }
    }
}

fn binomial_coefficient(n: usize, k: usize) -> f64 {
    // Multiplicative form keeps everything exact for the small n used here.
    let k = k.min(n - k.min(n));
    let mut c = 1.0;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c
}

/// `OR_k = C(N, k) mu^k (1 - mu)^(N - k)` over visible counts `k = 0..N`.
/// `mu` is the per-victim observation success probability.
pub fn occupancy_static_estimation(victims: usize, mu: f64) -> Result<OccupancyVector> {
    if victims < 1 {
        return Err(Error::contract("need at least one victim"));
    }
    if !(0.0..=1.0).contains(&mu) {
        return Err(Error::contract("mu must lie in [0, 1]"));
    }
    let values = (0..=victims)
        .map(|k| {
            binomial_coefficient(victims, k)
                * mu.powi(k as i32)
                * (1.0 - mu).powi((victims - k) as i32)
        })
        .collect();
    Ok(OccupancyVector {
        values,
        method: OccupancyMethod::StaticEstimation,
    })
}

/// Relative transition counts per subgame (pre-dissemination counts).
pub fn occupancy_static_observation(counts: &[u64]) -> Result<OccupancyVector> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::EmptyOccupancy);
    }
    Ok(OccupancyVector {
        values: counts.iter().map(|c| *c as f64 / total as f64).collect(),
        method: OccupancyMethod::StaticObservation,
    })
}

/// One EWA step: `OR_k <- beta * OR_k + (1 - beta) * counts_k / steps`,
/// renormalised to keep the vector summing to one.
pub fn occupancy_dynamic_observation(
    prev: &OccupancyVector,
    episode_counts: &[usize],
    steps: usize,
    beta: f64,
) -> OccupancyVector {
    debug_assert_eq!(prev.values.len(), episode_counts.len());
    let mut values: Vec<f64> = prev
        .values
        .iter()
        .zip(episode_counts)
        .map(|(or, c)| beta * or + (1.0 - beta) * (*c as f64 / steps as f64))
        .collect();
    let sum: f64 = values.iter().sum();
    if sum > 0.0 {
        for v in values.iter_mut() {
            *v /= sum;
        }
    }
    OccupancyVector {
        values,
        method: OccupancyMethod::DynamicObservation,
    }
}

/// Collapse a per-count occupancy vector (length N+1) onto a coarser
/// partition by summing the counts each bucket contains.
pub fn aggregate_to_partition(
    fine: &OccupancyVector,
    partition: &SubgamePartition,
) -> OccupancyVector {
    debug_assert_eq!(fine.values.len(), partition.victims() + 1);
    let mut values = vec![0.0; partition.subgames()];
    for (count, v) in fine.values.iter().enumerate() {
        values[partition.bucket_of_count(count)] += v;
    }
    OccupancyVector {
        values,
        method: fine.method,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn static_estimation_degenerate_rates() {
        let or = occupancy_static_estimation(3, 0.0).unwrap();
        assert_eq!(or.values, vec![1.0, 0.0, 0.0, 0.0]);
        let or = occupancy_static_estimation(3, 1.0).unwrap();
        assert_eq!(or.values, vec![0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn static_estimation_matches_direct_binomial() {
        let or = occupancy_static_estimation(3, 0.75).unwrap();
        let expected = [0.015625, 0.140625, 0.421875, 0.421875];
        for (got, want) in or.values.iter().zip(expected) {
            assert!((got - want).abs() < 1e-15, "{got} vs {want}");
        }
        assert!((or.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn static_observation_ratios() {
        let or = occupancy_static_observation(&[10, 10, 10, 10]).unwrap();
        assert_eq!(or.values, vec![0.25; 4]);
        let or = occupancy_static_observation(&[1, 2, 6, 16]).unwrap();
        assert_eq!(or.values, vec![0.04, 0.08, 0.24, 0.64]);
        let or = occupancy_static_observation(&[0, 7, 0]).unwrap();
        assert_eq!(or.values, vec![0.0, 1.0, 0.0]);
        assert!(matches!(
            occupancy_static_observation(&[0, 0]),
            Err(Error::EmptyOccupancy)
        ));
    }

    #[test]
    fn dynamic_observation_ewa() {
        let prev = OccupancyVector {
            values: vec![0.5, 0.5],
            method: OccupancyMethod::DynamicObservation,
        };
        // beta = 0 returns the current-episode frequencies exactly.
        let or = occupancy_dynamic_observation(&prev, &[5, 20], 25, 0.0);
        assert!((or.values[0] - 0.2).abs() < 1e-15);
        assert!((or.values[1] - 0.8).abs() < 1e-15);

        // Worked single-entry update: 0.9 * 0.5 + 0.1 * 0.3 = 0.48.
        let prev = OccupancyVector {
            values: vec![0.5, 0.3, 0.2],
            method: OccupancyMethod::DynamicObservation,
        };
        // 10 steps: 3/10, 5/10, 2/10 land exactly on the target fractions.
        let counts = [3usize, 5, 2];
        let or = occupancy_dynamic_observation(&prev, &counts, 10, 0.9);
        assert!((or.values[0] - 0.48).abs() < 1e-12, "got {}", or.values[0]);

        // Constant episode statistics converge geometrically to them.
        let mut or = OccupancyVector {
            values: vec![1.0, 0.0],
            method: OccupancyMethod::DynamicObservation,
        };
        for _ in 0..200 {
            or = occupancy_dynamic_observation(&or, &[5, 20], 25, 0.9);
        }
        assert!((or.values[0] - 0.2).abs() < 1e-8);
        assert!((or.sum() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn aggregation_sums_bucket_members() {
        let fine = occupancy_static_estimation(3, 0.75).unwrap();
        let partition = SubgamePartition::new(3, 2).unwrap();
        let coarse = aggregate_to_partition(&fine, &partition);
        assert!((coarse.values[0] - (0.015625 + 0.140625)).abs() < 1e-15);
        assert!((coarse.values[1] - (0.421875 + 0.421875)).abs() < 1e-15);
    }
}

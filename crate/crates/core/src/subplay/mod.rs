//! Subgame machinery: occupancy-rate estimation, the transition-dissemination
//! table, buffer routing, subpolicy training with policy meritocracy, and
//! hard-coded policy combination.

mod attack;
mod dissemination;
mod occupancy;

pub use attack::{
    combine_policies, meritocracy_wins, run_attack, AttackConfig, AttackLogRow, AttackResult,
    AttackRun, RetainedSubpolicy, SubpolicySet,
};
pub use dissemination::{
    build_dissemination_table, population_std, route_transition, BufferSet, DisseminationTable,
    StoreReport,
};
pub use occupancy::{
    aggregate_to_partition, occupancy_dynamic_observation, occupancy_static_estimation,
    occupancy_static_observation, OccupancyMethod, OccupancyVector,
};

//! Experiment orchestration for the adversarial-policy laboratory:
//! configuration, CLI command implementations, persistence, and report
//! aggregation.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod manifest;

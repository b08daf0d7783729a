//! Scenario runner for riesz-core: configuration, replication, reports.

pub mod commands;
pub mod config;
pub mod error;
pub mod observed;
pub mod report;
pub mod scenarios;
pub mod simulate;

pub use config::{Format, ScenarioConfig};
pub use error::LabError;
pub use simulate::{run_scenario, ReplicationReport};

/// Worker count from RIESZ_LAB_THREADS, if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var("RIESZ_LAB_THREADS").ok()?.trim().parse().ok().filter(|&t| t > 0)
}

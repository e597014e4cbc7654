//! Config-driven experiment runner for the horizon-reduction lab.

pub mod cache;
pub mod config;
pub mod runner;
pub mod stats;

pub use config::RunConfig;
pub use runner::{run, sweep, Report, RunOptions, RunSummary, SweepReport};

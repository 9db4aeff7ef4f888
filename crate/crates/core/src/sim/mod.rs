//! Docking scenarios, benchmarks and export.

pub mod bench;
pub mod export;
pub mod run;
pub mod scenario;

pub use bench::{run_benchmark, BenchConfig, BenchEntry, BenchReport};
pub use run::{run_docking, RunOutcome, TickRecord, TrajectoryLog, LOG_COLUMNS};
pub use scenario::{random_batch, ModelSelector, Scenario};

//! Scenario configs, the multi-seed runner, run metrics and CSV output.

mod config;
mod metrics;
pub mod output;
mod runner;

pub use config::{scenario_matrix, MarketParams, ScenarioConfig};
pub use metrics::{mean_std, CycleTrace, LfeAggregate, LfeMetrics, MethodAggregate, RunMetrics};
pub use runner::{
    build_simulation, compare_methods, eur_per_mwh_table, run_experiment, run_many, run_single, Comparison,
    ComparisonRow, Experiment, RunOptions, RunOutput,
};

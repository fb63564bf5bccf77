//! Seeded scenario generation, policy comparisons, experiment reports and
//! a brute-force grid oracle.

pub mod config;
pub mod experiment;
pub mod oracle;
pub mod report;
pub mod scenario;

pub use experiment::{
    run_comparison, run_experiment, run_rules, scenario_params, table1, RunOptions,
};
pub use oracle::{brute_force_oracle, grid_search, OracleResult};
pub use report::{emit_report, write_report, ExperimentReport, Format, ReportRow};
pub use scenario::{gen_scenario, InputMatrix, OverlapRule, Scenario, ScenarioConfig};

//! Config-driven scenarios, the run/sweep driver and the check suites.

pub mod check;
pub mod config;
pub mod maps;
pub mod runner;
pub mod scenarios;

pub use check::{run_suite, CheckResult, Suite};
pub use config::{GridParams, LinGaussModel, LinGaussParams, MultimodalParams, Rect, Scenario, ScenarioConfig, SineParams};
pub use maps::two_room_map;
pub use runner::{
    run_scenario, sweep, sweep_config, write_outputs, write_steps_csv, write_sweep_csv, FilterSummary, RunRecord, StepRow,
    Summary, SweepAxis, SweepRow,
};
pub use scenarios::{Instance, StepEval};

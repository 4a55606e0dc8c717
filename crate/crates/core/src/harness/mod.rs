//! Scenario files, the simulator that runs them, and the fuzzer.

pub mod fuzz;
pub mod runner;
pub mod scenario;

pub use fuzz::{
    fixture_exprs, fuzz, fuzz_one, fuzz_sequential, FuzzBounds, FuzzConfig, FuzzRun, FuzzSummary,
};
pub use runner::{
    delta_file_name, diff_data, replay_server, run_scenario, DeliveredDelta, DivergenceKind,
    DivergenceReport, Mode, RunError, RunOutput, Simulation,
};
pub use scenario::{
    load_scenario, parse_scenario, render_scenario, ClientSpec, Scenario, ScenarioError, Step,
};

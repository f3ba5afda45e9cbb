//! Scenario-driven batch runner behind the `greenkam` binary.

pub mod report;
pub mod run;
pub mod scenario;

pub use report::Report;
pub use run::{output_dir, run};
pub use scenario::{parse_scenario, Scenario, ScenarioError, Task};

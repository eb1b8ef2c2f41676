//! Scenario runner: JSON scenarios in, CSV and JSON artifacts out.

pub mod error;
pub mod hypotheses;
pub mod output;
pub mod pipeline;
pub mod presets;
pub mod scenario;

pub use error::{LabError, Result};
pub use hypotheses::{validate_hypotheses, HypothesisReport};
pub use pipeline::{run_scenario, RunOutcome, Summary};
pub use scenario::Scenario;

//! Fixed-step simulation of the pick-and-place task.

mod agents;
mod base;
mod dwell;
mod metrics;
mod params;
mod task;
mod trial;

pub use agents::{step_agents, Agent, LOOKAHEAD};
pub use base::step_base;
pub use dwell::{DwellMonitor, DwellStatus};
pub use metrics::{CommandRecord, FailureCause, PlacementRecord, TrialMetrics, TrialSummary};
pub use params::RobotParams;
pub use task::{Mode, TaskSpec, OBJECTS_PER_TRIAL};
pub use trial::{run_trial, SimConfig, SimError};

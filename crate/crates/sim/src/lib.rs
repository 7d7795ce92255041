//! Deterministic volunteer-fleet simulator.
//!
//! A [`Scenario`] describes campaigns and volunteers; [`run`] drives a
//! [`Target`] with the generated readings and checks what the service
//! reports against a [`GroundTruthLedger`] computed on the side.

pub mod generate;
pub mod ledger;
pub mod run;
pub mod scenario;
pub mod target;

pub use generate::{generate, VolunteerStream};
pub use ledger::GroundTruthLedger;
pub use run::{compare, provision_campaigns, run, Agreement, RunReport, ServiceObservation, SimError, AVG_COMPLETION_TOLERANCE};
pub use scenario::{parse_scenario, reference_scenario, validate_scenario, Scenario, ScenarioError, REFERENCE_SCENARIO};
pub use target::{Target, TargetError};

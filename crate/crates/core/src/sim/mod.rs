//! Discrete-event scenario simulator.

pub mod experiment;
pub mod robot;
pub mod scenario;
pub mod timeline;
pub mod trial;
pub mod validate;

pub use experiment::{run_experiment, summarize, ExperimentConfig, ExperimentReport, ExperimentRun, ScenarioReport};
pub use robot::SimRobot;
pub use scenario::{load_scenario, parse_scenario, publish_events, EngageLabel, ScenarioScript};
pub use timeline::{EndReason, Entry, TimedEntry, Timeline};
pub use trial::{run_trial, FailureKind, TrialOptions, TrialOutcome, TrialResult};
pub use validate::{discover_corpus, validate_bundle, validate_corpus, Corpus};

//! Plan-and-act skills for socially aware robots: skill definitions, the
//! language-model gateway, free-text action mapping, event-driven
//! triggering, and a deterministic scenario simulator.

pub mod engage;
pub mod events;
pub mod llm;
pub mod mapper;
pub mod sim;
pub mod skill;
pub mod validation;

pub use llm::{Gateway, LlmError};
pub use mapper::{map_plan, MappingOutcome};
pub use skill::{ActionSpec, NominalDuration, Phase, SkillSpec, SkillState, StimuliKind};
pub use validation::{Severity, Violation};

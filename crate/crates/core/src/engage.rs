//! The shipped engage skill: initiate a conversation from an ambiguous
//! readiness state.

use crate::skill::{ActionSpec, NominalDuration, SkillSpec, StimuliKind};

pub const DEFAULT_ENVIRONMENT: &str = "a facility";
pub const DEFAULT_PHRASE: &str = "Hello, may I help you?";

pub const APPROACH_SECONDS: f64 = 6.0;
pub const PAUSE_SECONDS: f64 = 0.5;
pub const EYE_CONTACT_SECONDS: f64 = 0.5;
pub const SPEAK_SECONDS: f64 = 2.0;

fn action(
    name: &str,
    text: Option<&str>,
    stimuli: StimuliKind,
    reference: &str,
    duration: NominalDuration,
    interruptible: bool,
) -> ActionSpec {
    ActionSpec {
        name: name.into(),
        action_text: text.map(String::from),
        stimuli,
        reference_response: reference.into(),
        nominal_duration: duration,
        interruptible,
    }
}

pub fn engage_skill() -> SkillSpec {
    use NominalDuration::{Seconds, Unbounded};
    use StimuliKind::*;
    SkillSpec {
        name: "engage".into(),
        robot_goal_template: "initiate a conversation at {E}".into(),
        environment: DEFAULT_ENVIRONMENT.into(),
        starting_action: "approach".into(),
        end_action: "speak".into(),
        actions: vec![
            action(
                "approach",
                Some("The robot is approaching the person."),
                Type2B,
                "The robot should gently move into the person's line of sight.",
                Seconds(APPROACH_SECONDS),
                true,
            ),
            action(
                "wait",
                Some("The robot is waiting for the human to finish \"{X_a}\"."),
                Type1Activity,
                "The robot should wait until the person finishes the activity.",
                Unbounded,
                true,
            ),
            action(
                "wait for cue",
                Some("The robot is waiting for an eye contact from the person."),
                Type1Gaze,
                "The robot should wait until the person makes eye contact or pauses.",
                Unbounded,
                true,
            ),
            action(
                "eye contact",
                Some("The robot made eye contact."),
                Type2A,
                "The robot should make eye contact.",
                Seconds(EYE_CONTACT_SECONDS),
                false,
            ),
            action(
                "pause",
                Some("The robot paused its approach."),
                Type2A,
                "The robot should briefly pause its task.",
                Seconds(PAUSE_SECONDS),
                false,
            ),
            action(
                "speak",
                None,
                End,
                "The robot should gently announce its presence and ask if the person would like assistance.",
                Seconds(SPEAK_SECONDS),
                false,
            ),
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_file_matches_definition() {
        let text = include_str!("../../../data/skills/engage.toml");
        assert_eq!(SkillSpec::from_toml_str(text).unwrap(), engage_skill());
    }

    #[test]
    fn starting_and_end_actions() {
        let skill = engage_skill();
        assert_eq!(skill.starting_action, "approach");
        assert_eq!(skill.end_action, "speak");
        assert_eq!(skill.actions.len(), 6);
    }
}

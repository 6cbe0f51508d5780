//! Skill data model and the per-trial skill state machine.
//!
//! A skill owns an action set, a starting action that lets the robot observe
//! the human first, and an end action that reaches the goal state. Which
//! action runs in between is decided at runtime by the planner; this module
//! only tracks what is running and what is queued behind it.

use std::collections::{HashSet, VecDeque};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::validation::Violation;

pub const ACTIVITY_PLACEHOLDER: &str = "{X_a}";
pub const ENVIRONMENT_PLACEHOLDER: &str = "{E}";

#[derive(Debug, Error, PartialEq)]
pub enum SkillError {
    #[error("unknown action `{0}`")]
    UnknownAction(String),
    #[error("unresolved placeholder `{placeholder}` in template `{template}`")]
    UnresolvedPlaceholder { placeholder: String, template: String },
    #[error("action `{0}` has no action text")]
    MissingActionText(String),
    #[error("skill file: {0}")]
    Format(String),
    #[error("skill file {path}: {message}")]
    Io { path: String, message: String },
}

/// When the event manager should call the planner for an action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StimuliKind {
    /// The plan names an observable timing on the human's activity.
    #[serde(rename = "type1-activity")]
    Type1Activity,
    /// The plan names an observable timing on the human's gaze.
    #[serde(rename = "type1-gaze")]
    Type1Gaze,
    /// Short low-level action; re-plan on completion.
    #[serde(rename = "type2-a")]
    Type2A,
    /// Long high-level action; re-plan on completion, situational change, or
    /// when the lose-person probe says so.
    #[serde(rename = "type2-b")]
    Type2B,
    #[serde(rename = "end")]
    End,
}

impl StimuliKind {
    pub fn is_type1(self) -> bool {
        matches!(self, Self::Type1Activity | Self::Type1Gaze)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Type1Activity => "type1-activity",
            Self::Type1Gaze => "type1-gaze",
            Self::Type2A => "type2-a",
            Self::Type2B => "type2-b",
            Self::End => "end",
        }
    }
}

impl fmt::Display for StimuliKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Nominal run time of an action in simulated seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NominalDuration {
    Seconds(f64),
    /// Ends only when a new plan replaces the action.
    Unbounded,
}

impl NominalDuration {
    pub fn seconds(self) -> Option<f64> {
        match self {
            Self::Seconds(s) => Some(s),
            Self::Unbounded => None,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum DurationRepr {
    Seconds(f64),
    Word(String),
}

impl Serialize for NominalDuration {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Self::Seconds(v) => DurationRepr::Seconds(*v),
            Self::Unbounded => DurationRepr::Word("unbounded".into()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for NominalDuration {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match DurationRepr::deserialize(d)? {
            DurationRepr::Seconds(v) => Ok(Self::Seconds(v)),
            DurationRepr::Word(w) if w.eq_ignore_ascii_case("unbounded") => Ok(Self::Unbounded),
            DurationRepr::Word(w) => Err(serde::de::Error::custom(format!(
                "expected seconds or \"unbounded\", got {w:?}"
            ))),
        }
    }
}

/// One member of a skill's action set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSpec {
    pub name: String,
    /// Sentence describing the running action; `None` for the end action.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_text: Option<String>,
    pub stimuli: StimuliKind,
    /// Anchor text the mapper scores planner output against.
    pub reference_response: String,
    #[serde(rename = "duration_s")]
    pub nominal_duration: NominalDuration,
    #[serde(default)]
    pub interruptible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillSpec {
    pub name: String,
    pub robot_goal_template: String,
    pub environment: String,
    pub starting_action: String,
    pub end_action: String,
    pub actions: Vec<ActionSpec>,
}

impl SkillSpec {
    pub fn action(&self, name: &str) -> Option<&ActionSpec> {
        self.actions.iter().find(|a| a.name == name)
    }

    pub fn require(&self, name: &str) -> Result<&ActionSpec, SkillError> {
        self.action(name)
            .ok_or_else(|| SkillError::UnknownAction(name.to_string()))
    }

    pub fn is_end(&self, name: &str) -> bool {
        self.end_action == name
    }

    pub fn action_names(&self) -> Vec<String> {
        self.actions.iter().map(|a| a.name.clone()).collect()
    }

    /// The goal sentence handed to the planner, e.g.
    /// `The robot's task is to initiate a conversation at a facility.`
    pub fn goal_text(&self) -> Result<String, SkillError> {
        let goal = substitute(&self.robot_goal_template, None, &self.environment)?;
        Ok(as_sentence(&format!("The robot's task is to {goal}")))
    }

    pub fn from_toml_str(source: &str) -> Result<Self, SkillError> {
        toml::from_str(source).map_err(|e| SkillError::Format(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("skill spec serializes to toml")
    }

    pub fn load(path: &Path) -> Result<Self, SkillError> {
        let text = std::fs::read_to_string(path).map_err(|e| SkillError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml_str(&text)
    }
}

/// Checks every structural rule of a skill and its action set. An empty
/// report means the skill is runnable.
pub fn validate_skill(spec: &SkillSpec) -> Vec<Violation> {
    let mut report = Vec::new();
    if spec.actions.is_empty() {
        report.push(Violation::error("actions", "action set is empty"));
    }

    let end_resolves = spec.action(&spec.end_action).is_some();
    let mut seen = HashSet::new();
    for (i, action) in spec.actions.iter().enumerate() {
        let at = |field: &str| format!("actions[{i}].{field}");
        if action.name.trim().is_empty() {
            report.push(Violation::error(at("name"), "action name is empty"));
        } else if !seen.insert(action.name.as_str()) {
            report.push(Violation::error(
                at("name"),
                format!("duplicate action name `{}`", action.name),
            ));
        }
        if action.reference_response.trim().is_empty() {
            report.push(Violation::error(
                at("reference_response"),
                "reference response must be non-empty",
            ));
        }
        if action.stimuli.is_type1() && action.nominal_duration != NominalDuration::Unbounded {
            report.push(Violation::error(
                at("duration_s"),
                format!("{} actions must be unbounded", action.stimuli),
            ));
        }
        if let NominalDuration::Seconds(s) = action.nominal_duration {
            if !(s.is_finite() && s >= 0.0) {
                report.push(Violation::error(
                    at("duration_s"),
                    format!("duration must be a finite non-negative number, got {s}"),
                ));
            }
            if action.stimuli == StimuliKind::Type2B && s <= 0.0 {
                report.push(Violation::error(
                    at("duration_s"),
                    "type2-b actions need a positive duration for the lose-person probe",
                ));
            }
        }
        if action.stimuli == StimuliKind::End && action.name != spec.end_action && end_resolves {
            report.push(Violation::error(
                at("stimuli"),
                format!("`end` stimuli on `{}`, which is not the end action", action.name),
            ));
        }
        if action.stimuli != StimuliKind::End {
            match &action.action_text {
                None => report.push(Violation::error(at("action_text"), "missing action text")),
                Some(t) => {
                    if let Err(e) = render_template(t, "x", "e") {
                        report.push(Violation::error(at("action_text"), e.to_string()));
                    }
                }
            }
        }
    }

    if spec.action(&spec.starting_action).is_none() {
        report.push(Violation::error(
            "starting_action",
            format!("`{}` is not in the action set", spec.starting_action),
        ));
    }
    match spec.action(&spec.end_action) {
        None => report.push(Violation::error(
            "end_action",
            format!("`{}` is not in the action set", spec.end_action),
        )),
        Some(end) if end.stimuli != StimuliKind::End => report.push(Violation::error(
            "end_action",
            format!("end action `{}` must use `end` stimuli", end.name),
        )),
        Some(_) => {}
    }
    if spec.starting_action == spec.end_action && !spec.end_action.is_empty() {
        report.push(Violation::error(
            "starting_action",
            "starting action and end action must differ",
        ));
    }
    if let Err(e) = substitute(&spec.robot_goal_template, None, &spec.environment) {
        report.push(Violation::error("robot_goal_template", e.to_string()));
    }
    report
}

/// Renders an action's text for the planner with `{X_a}` and `{E}` filled in.
pub fn render_action_text(
    spec: &ActionSpec,
    captured_activity: &str,
    environment: &str,
) -> Result<String, SkillError> {
    let template = spec
        .action_text
        .as_deref()
        .ok_or_else(|| SkillError::MissingActionText(spec.name.clone()))?;
    render_template(template, captured_activity, environment)
}

fn render_template(template: &str, activity: &str, environment: &str) -> Result<String, SkillError> {
    substitute(template, Some(activity), environment).map(|t| as_sentence(&t))
}

fn substitute(template: &str, activity: Option<&str>, environment: &str) -> Result<String, SkillError> {
    let mut out = String::with_capacity(template.len() + 32);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open..];
        let close = tail.find('}').ok_or_else(|| SkillError::UnresolvedPlaceholder {
            placeholder: tail.to_string(),
            template: template.to_string(),
        })?;
        let placeholder = &tail[..=close];
        match (placeholder, activity) {
            (ACTIVITY_PLACEHOLDER, Some(a)) => out.push_str(a),
            (ENVIRONMENT_PLACEHOLDER, _) => out.push_str(environment),
            _ => {
                return Err(SkillError::UnresolvedPlaceholder {
                    placeholder: placeholder.to_string(),
                    template: template.to_string(),
                })
            }
        }
        rest = &tail[close + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Trims and guarantees a terminal period.
pub(crate) fn as_sentence(text: &str) -> String {
    let t = text.trim();
    if t.ends_with(['.', '!', '?']) {
        t.to_string()
    } else {
        format!("{t}.")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Phase {
    Running,
    CompletedEnd,
    TimedOut,
}

/// Mutable per-trial state of one skill execution.
#[derive(Debug, Clone, PartialEq)]
pub struct SkillState {
    pub current_action: String,
    pub pending_queue: VecDeque<String>,
    pub action_started_at: f64,
    /// Activity snapshot taken when `current_action` began.
    pub captured_activity: String,
    pub phase: Phase,
    /// Speech extracted from the plan that queued the current actions.
    pub speech_content: Option<String>,
    /// Incremented on every `begin_action`; lets timers detect staleness.
    pub epoch: u64,
}

impl SkillState {
    /// State of a trial that has not begun any action yet.
    pub fn idle() -> Self {
        Self {
            current_action: String::new(),
            pending_queue: VecDeque::new(),
            action_started_at: 0.0,
            captured_activity: String::new(),
            phase: Phase::Running,
            speech_content: None,
            epoch: 0,
        }
    }

    pub fn begin_action(
        &mut self,
        skill: &SkillSpec,
        action: &str,
        now: f64,
        current_activity: &str,
    ) -> Result<(), SkillError> {
        skill.require(action)?;
        self.current_action = action.to_string();
        self.action_started_at = now;
        self.captured_activity = current_activity.to_string();
        self.epoch += 1;
        if skill.is_end(action) {
            self.pending_queue.clear();
        }
        Ok(())
    }

    /// Replaces whatever was queued with a fresh plan and returns the action
    /// to begin now. Anything after the end action is dropped.
    pub fn accept_plan(
        &mut self,
        skill: &SkillSpec,
        plan: &[String],
        speech_content: Option<String>,
    ) -> Option<String> {
        self.pending_queue.clear();
        for name in plan {
            self.pending_queue.push_back(name.clone());
            if skill.is_end(name) {
                break;
            }
        }
        self.speech_content = speech_content;
        self.pending_queue.pop_front()
    }

    pub fn next_queued(&mut self) -> Option<String> {
        self.pending_queue.pop_front()
    }

    /// Marks the current action as run to completion.
    pub fn complete_current(&mut self, skill: &SkillSpec) {
        if skill.is_end(&self.current_action) {
            self.phase = Phase::CompletedEnd;
            self.pending_queue.clear();
        }
    }

    pub fn time_out(&mut self) {
        if self.phase == Phase::Running {
            self.phase = Phase::TimedOut;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engage::engage_skill;

    #[test]
    fn engage_skill_validates_clean() {
        assert!(validate_skill(&engage_skill()).is_empty());
    }

    #[test]
    fn dangling_end_action_is_one_violation() {
        let mut skill = engage_skill();
        skill.end_action = "dance".into();
        let report = validate_skill(&skill);
        assert_eq!(report.len(), 1, "{report:?}");
        assert_eq!(report[0].field, "end_action");
    }

    #[test]
    fn duplicate_name_is_one_violation() {
        let mut skill = engage_skill();
        let dup = skill.action("wait").unwrap().clone();
        skill.actions.push(dup);
        let report = validate_skill(&skill);
        assert_eq!(report.len(), 1, "{report:?}");
        assert!(report[0].field.ends_with(".name"));
        assert!(report[0].message.contains("duplicate"));
    }

    #[test]
    fn bounded_type1_action_is_rejected() {
        let mut skill = engage_skill();
        skill.actions[1].nominal_duration = NominalDuration::Seconds(3.0);
        let report = validate_skill(&skill);
        assert_eq!(report[0].field, "actions[1].duration_s");
    }

    #[test]
    fn wait_text_snapshots_activity() {
        let skill = engage_skill();
        let text = render_action_text(skill.action("wait").unwrap(), "talking on a phone", "a facility")
            .unwrap();
        assert_eq!(text, "The robot is waiting for the human to finish \"talking on a phone\".");
    }

    #[test]
    fn approach_text_has_no_placeholder() {
        let skill = engage_skill();
        let text = render_action_text(skill.action("approach").unwrap(), "anything", "x").unwrap();
        assert_eq!(text, "The robot is approaching the person.");
    }

    #[test]
    fn unknown_placeholder_is_rejected() {
        let mut spec = engage_skill().action("wait").unwrap().clone();
        spec.action_text = Some("Waiting on {X_b}".into());
        let err = render_action_text(&spec, "a", "b").unwrap_err();
        assert!(matches!(err, SkillError::UnresolvedPlaceholder { ref placeholder, .. } if placeholder == "{X_b}"));
    }

    #[test]
    fn rendered_text_gains_period() {
        let mut spec = engage_skill().action("approach").unwrap().clone();
        spec.action_text = Some("The robot is near {E}".into());
        assert_eq!(render_action_text(&spec, "", "the desk").unwrap(), "The robot is near the desk.");
    }

    #[test]
    fn goal_sentence() {
        assert_eq!(
            engage_skill().goal_text().unwrap(),
            "The robot's task is to initiate a conversation at a facility."
        );
    }

    #[test]
    fn begin_action_captures_activity() {
        let skill = engage_skill();
        let mut state = SkillState::idle();
        state.begin_action(&skill, "wait", 12.0, "talking on a phone").unwrap();
        assert_eq!(state.current_action, "wait");
        assert_eq!(state.action_started_at, 12.0);
        assert_eq!(state.captured_activity, "talking on a phone");
    }

    #[test]
    fn begin_then_rebegin_resnapshots() {
        let skill = engage_skill();
        let mut state = SkillState::idle();
        state.begin_action(&skill, "approach", 0.0, "walking by").unwrap();
        state.begin_action(&skill, "pause", 3.0, "standing still").unwrap();
        assert_eq!(state.current_action, "pause");
        assert_eq!(state.captured_activity, "standing still");
        assert_eq!(state.epoch, 2);
    }

    #[test]
    fn end_action_completes_skill() {
        let skill = engage_skill();
        let mut state = SkillState::idle();
        state.begin_action(&skill, "speak", 4.0, "sitting").unwrap();
        assert_eq!(state.phase, Phase::Running);
        state.complete_current(&skill);
        assert_eq!(state.phase, Phase::CompletedEnd);
    }

    #[test]
    fn unknown_action_names_offender() {
        let skill = engage_skill();
        let mut state = SkillState::idle();
        assert_eq!(
            state.begin_action(&skill, "dance", 0.0, "x"),
            Err(SkillError::UnknownAction("dance".into()))
        );
    }

    #[test]
    fn plan_after_end_action_is_dropped() {
        let skill = engage_skill();
        let mut state = SkillState::idle();
        let plan: Vec<String> = ["pause", "speak", "wait"].map(String::from).to_vec();
        let first = state.accept_plan(&skill, &plan, None);
        assert_eq!(first.as_deref(), Some("pause"));
        assert_eq!(state.pending_queue, VecDeque::from(vec!["speak".to_string()]));
    }

    #[test]
    fn skill_file_round_trips() {
        let skill = engage_skill();
        let text = skill.to_toml_string();
        assert_eq!(SkillSpec::from_toml_str(&text).unwrap(), skill);
    }
}

//! Event manager: arms the running action's stimuli, asks the second-stage
//! questions, and decides when a situation event warrants a new plan.

use std::cmp::Ordering;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::llm::{Answered, Gateway, HumanSituation, LlmError, PlanResponse, RobotSituation, Stage, WaitTime};
use crate::mapper::{map_plan, propose_registration, MappingOutcome, RegistrationLedger};
use crate::skill::{render_action_text, ActionSpec, SkillError, SkillSpec, SkillState, StimuliKind};

/// Observe cadence after a "yes" to the lose-person question.
pub const DEFAULT_OBSERVE_INTERVAL_S: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Gaze {
    Toward,
    Away,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimerPurpose {
    WaitDeadline,
    Observe,
}

/// A virtual timer, tagged with the arm epoch that scheduled it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TimerId {
    pub epoch: u64,
    pub purpose: TimerPurpose,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    ActivityChanged { text: String },
    GazeChanged { gaze: Gaze },
    TimerExpired { timer: TimerId },
    ActionCompleted { action: String, epoch: u64 },
    PersonDeparted,
}

impl EventKind {
    /// Processing order among events sharing a timestamp.
    pub fn tie_rank(&self) -> u8 {
        match self {
            Self::ActivityChanged { .. } => 0,
            Self::GazeChanged { .. } => 1,
            Self::TimerExpired { .. } => 2,
            Self::ActionCompleted { .. } => 3,
            Self::PersonDeparted => 4,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::ActivityChanged { .. } => "activity-changed",
            Self::GazeChanged { .. } => "gaze-changed",
            Self::TimerExpired { .. } => "timer-expired",
            Self::ActionCompleted { .. } => "action-completed",
            Self::PersonDeparted => "person-departed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SituationEvent {
    pub at: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl SituationEvent {
    pub fn new(at: f64, kind: EventKind) -> Self {
        Self { at, kind }
    }

    /// Total order used by the simulator queue: time, then tie rank.
    pub fn queue_order(&self, other: &Self) -> Ordering {
        self.at
            .total_cmp(&other.at)
            .then(self.kind.tie_rank().cmp(&other.kind.tie_rank()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TriggerCause {
    ActivityChange,
    GazeChange,
    Completion,
    WaitDeadline,
    LosePersonProbe,
}

impl TriggerCause {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::ActivityChange => "activity-change",
            Self::GazeChange => "gaze-change",
            Self::Completion => "completion",
            Self::WaitDeadline => "wait-deadline",
            Self::LosePersonProbe => "lose-person-probe",
        }
    }
}

impl fmt::Display for TriggerCause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TriggerDecision {
    Ignore,
    Fire(TriggerCause),
}

impl TriggerDecision {
    pub fn fire_stage1(self) -> bool {
        matches!(self, Self::Fire(_))
    }

    pub fn cause(self) -> Option<TriggerCause> {
        match self {
            Self::Fire(c) => Some(c),
            Self::Ignore => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoseProbe {
    pub horizon_s: f64,
    pub answer: bool,
    pub fallback: bool,
}

/// Trigger conditions of the running action.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmedStimuli {
    pub action: String,
    pub kind: StimuliKind,
    pub epoch: u64,
    pub armed_at: f64,
    pub wait_time: Option<Answered<WaitTime>>,
    pub wait_deadline: Option<f64>,
    pub lose_person_probe: Option<LoseProbe>,
    pub observe_interval: f64,
}

impl ArmedStimuli {
    /// Timers to schedule right after arming.
    pub fn initial_timers(&self) -> Vec<(f64, TimerId)> {
        let mut timers = Vec::new();
        if let Some(at) = self.wait_deadline {
            timers.push((at, self.timer(TimerPurpose::WaitDeadline)));
        }
        if self.observes() {
            timers.push((self.armed_at + self.observe_interval, self.timer(TimerPurpose::Observe)));
        }
        timers
    }

    pub fn observes(&self) -> bool {
        self.lose_person_probe.as_ref().is_some_and(|p| p.answer)
    }

    pub fn timer(&self, purpose: TimerPurpose) -> TimerId {
        TimerId {
            epoch: self.epoch,
            purpose,
        }
    }
}

/// Arms `action`, asking whichever second-stage question its category needs.
/// `remaining_s` is the time left on the action, used as the lose-person horizon.
pub fn arm(
    action: &ActionSpec,
    captured_activity: &str,
    now: f64,
    epoch: u64,
    remaining_s: Option<f64>,
    observe_interval: f64,
    gateway: &mut Gateway<'_>,
) -> Result<ArmedStimuli, LlmError> {
    debug_assert!(action.stimuli != StimuliKind::End, "end actions are never armed");
    let mut armed = ArmedStimuli {
        action: action.name.clone(),
        kind: action.stimuli,
        epoch,
        armed_at: now,
        wait_time: None,
        wait_deadline: None,
        lose_person_probe: None,
        observe_interval,
    };
    match action.stimuli {
        StimuliKind::Type1Activity | StimuliKind::Type1Gaze => {
            let answer = gateway.ask_wait_time(captured_activity)?;
            armed.wait_deadline = answer.value.seconds().map(|s| now + s);
            armed.wait_time = Some(answer);
        }
        StimuliKind::Type2B => {
            let horizon_s = remaining_s
                .or(action.nominal_duration.seconds())
                .ok_or_else(|| LlmError::InvalidInput(format!("{} has no duration to probe", action.name)))?;
            let answer = gateway.ask_lose_person(captured_activity, horizon_s)?;
            armed.lose_person_probe = Some(LoseProbe {
                horizon_s,
                answer: answer.value,
                fallback: answer.fallback,
            });
        }
        StimuliKind::Type2A | StimuliKind::End => {}
    }
    Ok(armed)
}

/// Whether `event` should start a planning round for the armed action.
/// Timers and completions from earlier arms are ignored.
pub fn on_event(armed: &ArmedStimuli, event: &SituationEvent) -> TriggerDecision {
    use StimuliKind::*;
    use TriggerDecision::{Fire, Ignore};
    match (&event.kind, armed.kind) {
        (EventKind::PersonDeparted, _) => Ignore,
        (EventKind::TimerExpired { timer }, _) if timer.epoch != armed.epoch => Ignore,
        (EventKind::ActionCompleted { action, epoch }, _) if *epoch != armed.epoch || *action != armed.action => {
            Ignore
        }

        (EventKind::ActivityChanged { .. }, Type1Activity) => Fire(TriggerCause::ActivityChange),
        (EventKind::GazeChanged { gaze: Gaze::Toward }, Type1Gaze) => Fire(TriggerCause::GazeChange),
        (EventKind::TimerExpired { timer }, Type1Activity | Type1Gaze) if timer.purpose == TimerPurpose::WaitDeadline => {
            Fire(TriggerCause::WaitDeadline)
        }

        (EventKind::ActionCompleted { .. }, Type2A | Type2B) => Fire(TriggerCause::Completion),
        (EventKind::ActivityChanged { .. }, Type2B) => Fire(TriggerCause::ActivityChange),
        (EventKind::GazeChanged { .. }, Type2B) => Fire(TriggerCause::GazeChange),
        (EventKind::TimerExpired { timer }, Type2B) if timer.purpose == TimerPurpose::Observe && armed.observes() => {
            Fire(TriggerCause::LosePersonProbe)
        }
        _ => Ignore,
    }
}

/// `t=<sec> stage=<..> cause=<..> action=<..>`
pub fn trigger_log_line(at: f64, stage: Stage, cause: &str, action: &str) -> String {
    format!("t={at:.2} stage={} cause={cause} action={action}", stage.marker())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MappingMode {
    /// Unmappable plans are errors.
    #[default]
    Experiment,
    /// Unmappable clauses are logged as registration drafts.
    Live,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanningOptions {
    pub action_text_enabled: bool,
    pub threshold: f64,
    pub mode: MappingMode,
}

impl Default for PlanningOptions {
    fn default() -> Self {
        Self {
            action_text_enabled: true,
            threshold: crate::mapper::DEFAULT_THRESHOLD,
            mode: MappingMode::Experiment,
        }
    }
}

#[derive(Debug, Error)]
pub enum PlanningError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Skill(#[from] SkillError),
    #[error("no clause of {action_raw:?} maps to an action")]
    Unmapped { action_raw: String },
    #[error("registration ledger: {0}")]
    Ledger(String),
}

/// Outcome of one stage-1 call.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanningRound {
    pub robot: RobotSituation,
    /// `None` when the reply could not be parsed even after a re-ask.
    pub plan: Option<PlanResponse>,
    pub mapping: Option<MappingOutcome>,
    /// Matched actions in order; empty means keep the current action.
    pub actions: Vec<String>,
}

pub fn robot_situation(
    skill: &SkillSpec,
    state: &SkillState,
    action_text_enabled: bool,
) -> Result<RobotSituation, SkillError> {
    let current = skill.require(&state.current_action)?;
    let action_text = if action_text_enabled && current.action_text.is_some() {
        Some(render_action_text(current, &state.captured_activity, &skill.environment)?)
    } else {
        None
    };
    Ok(RobotSituation {
        goal_text: skill.goal_text()?,
        action_text,
    })
}

pub fn run_planning_round(
    gateway: &mut Gateway<'_>,
    skill: &SkillSpec,
    state: &SkillState,
    human: &HumanSituation,
    options: &PlanningOptions,
    ledger: Option<&mut RegistrationLedger>,
    now: f64,
) -> Result<PlanningRound, PlanningError> {
    let robot = robot_situation(skill, state, options.action_text_enabled)?;
    let Some(plan) = gateway.ask_plan(&robot, human)? else {
        return Ok(PlanningRound {
            robot,
            plan: None,
            mapping: None,
            actions: Vec::new(),
        });
    };
    let mapping = map_plan(&plan, &skill.actions, options.threshold);
    if !mapping.unmapped.is_empty() {
        if let Some(ledger) = ledger {
            for clause in &mapping.unmapped {
                ledger
                    .record(&propose_registration(clause, None), now)
                    .map_err(|e| PlanningError::Ledger(e.to_string()))?;
            }
        }
        if mapping.matches.is_empty() && options.mode == MappingMode::Experiment {
            return Err(PlanningError::Unmapped {
                action_raw: plan.action_raw,
            });
        }
    }
    let actions = mapping.action_names();
    Ok(PlanningRound {
        robot,
        plan: Some(plan),
        mapping: Some(mapping),
        actions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engage::engage_skill;
    use crate::llm::{ChatClient, Prompt};
    use std::sync::{Arc, Mutex};

    /// Answers by stage and remembers every prompt.
    #[derive(Clone)]
    struct Stub {
        plan: &'static str,
        wait: &'static str,
        lose: &'static str,
        seen: Arc<Mutex<Vec<Prompt>>>,
    }

    impl Stub {
        fn new(plan: &'static str, wait: &'static str, lose: &'static str) -> Self {
            Self {
                plan,
                wait,
                lose,
                seen: Arc::default(),
            }
        }
    }

    impl ChatClient for Stub {
        fn complete(&mut self, prompt: &Prompt) -> Result<String, LlmError> {
            self.seen.lock().unwrap().push(prompt.clone());
            Ok(match prompt.stage {
                Stage::Plan => self.plan,
                Stage::WaitTime => self.wait,
                Stage::LosePerson => self.lose,
            }
            .to_string())
        }
    }

    fn gateway(wait: &'static str, lose: &'static str) -> Gateway<'static> {
        Gateway::new(Stub::new("{}", wait, lose))
    }

    fn ev(at: f64, kind: EventKind) -> SituationEvent {
        SituationEvent::new(at, kind)
    }

    fn armed_for(name: &str, wait: &'static str, lose: &'static str) -> ArmedStimuli {
        let skill = engage_skill();
        let mut gw = gateway(wait, lose);
        arm(skill.action(name).unwrap(), "walking by", 1.0, 7, None, 1.0, &mut gw).unwrap()
    }

    #[test]
    fn wait_for_cue_deadline_from_answer() {
        let armed = armed_for("wait for cue", r#"{"wait_time": 2.0, "reason": ""}"#, "");
        assert_eq!(armed.wait_deadline, Some(3.0));
        assert_eq!(
            armed.initial_timers(),
            [(3.0, TimerId { epoch: 7, purpose: TimerPurpose::WaitDeadline })]
        );
    }

    #[test]
    fn infinite_wait_has_no_deadline() {
        let armed = armed_for("wait", r#"{"wait_time": "inf", "reason": ""}"#, "");
        assert_eq!(armed.wait_deadline, None);
        assert!(armed.initial_timers().is_empty());
    }

    #[test]
    fn yes_probe_schedules_observe_tick() {
        let armed = armed_for("approach", "", r#"{"answer": "yes", "reason": ""}"#);
        let probe = armed.lose_person_probe.as_ref().unwrap();
        assert_eq!(probe.horizon_s, 6.0);
        assert!(probe.answer);
        assert_eq!(armed.initial_timers(), [(2.0, armed.timer(TimerPurpose::Observe))]);
    }

    #[test]
    fn one_question_per_arm_none_for_short_actions() {
        let skill = engage_skill();
        for (name, expected) in [("approach", 1), ("wait", 1), ("wait for cue", 1), ("pause", 0), ("eye contact", 0)] {
            let stub = Stub::new("{}", r#"{"wait_time": 1}"#, r#"{"answer": "no"}"#);
            let seen = stub.seen.clone();
            let mut gw = Gateway::new(stub);
            arm(skill.action(name).unwrap(), "reading", 0.0, 1, None, 1.0, &mut gw).unwrap();
            assert_eq!(seen.lock().unwrap().len(), expected, "{name}");
        }
    }

    #[test]
    fn type1_activity_rules() {
        let armed = armed_for("wait", r#"{"wait_time": 2}"#, "");
        let fire = |k| on_event(&armed, &ev(2.0, k));
        assert_eq!(
            fire(EventKind::ActivityChanged { text: "looking at the robot after the call".into() }),
            TriggerDecision::Fire(TriggerCause::ActivityChange)
        );
        assert_eq!(fire(EventKind::GazeChanged { gaze: Gaze::Toward }), TriggerDecision::Ignore);
        assert_eq!(
            fire(EventKind::TimerExpired { timer: armed.timer(TimerPurpose::WaitDeadline) }),
            TriggerDecision::Fire(TriggerCause::WaitDeadline)
        );
    }

    #[test]
    fn type1_gaze_fires_only_toward() {
        let armed = armed_for("wait for cue", r#"{"wait_time": 2}"#, "");
        assert!(on_event(&armed, &ev(2.0, EventKind::GazeChanged { gaze: Gaze::Toward })).fire_stage1());
        assert!(!on_event(&armed, &ev(2.0, EventKind::GazeChanged { gaze: Gaze::Away })).fire_stage1());
        assert!(!on_event(&armed, &ev(2.0, EventKind::ActivityChanged { text: "x".into() })).fire_stage1());
    }

    #[test]
    fn type2a_fires_only_on_own_completion() {
        let armed = armed_for("pause", "", "");
        assert!(!on_event(&armed, &ev(1.2, EventKind::GazeChanged { gaze: Gaze::Toward })).fire_stage1());
        let done = |action: &str, epoch| EventKind::ActionCompleted { action: action.into(), epoch };
        assert_eq!(
            on_event(&armed, &ev(1.5, done("pause", 7))).cause(),
            Some(TriggerCause::Completion)
        );
        assert!(!on_event(&armed, &ev(1.5, done("pause", 6))).fire_stage1());
        assert!(!on_event(&armed, &ev(1.5, done("approach", 7))).fire_stage1());
    }

    #[test]
    fn type2b_situational_changes_and_probe() {
        let no = armed_for("approach", "", r#"{"answer": "no"}"#);
        assert!(on_event(&no, &ev(2.0, EventKind::GazeChanged { gaze: Gaze::Away })).fire_stage1());
        assert!(on_event(&no, &ev(2.0, EventKind::ActivityChanged { text: "x".into() })).fire_stage1());
        let tick = EventKind::TimerExpired { timer: no.timer(TimerPurpose::Observe) };
        assert!(!on_event(&no, &ev(2.0, tick.clone())).fire_stage1());

        let yes = armed_for("approach", "", r#"{"answer": "yes"}"#);
        assert_eq!(on_event(&yes, &ev(2.0, tick)).cause(), Some(TriggerCause::LosePersonProbe));
    }

    #[test]
    fn stale_timers_and_departure_never_fire() {
        let armed = armed_for("wait for cue", r#"{"wait_time": 2}"#, "");
        let stale = TimerId { epoch: 6, purpose: TimerPurpose::WaitDeadline };
        assert!(!on_event(&armed, &ev(3.0, EventKind::TimerExpired { timer: stale })).fire_stage1());
        assert!(!on_event(&armed, &ev(3.0, EventKind::PersonDeparted)).fire_stage1());
    }

    #[test]
    fn tie_order() {
        let kinds = [
            EventKind::PersonDeparted,
            EventKind::ActionCompleted { action: "a".into(), epoch: 0 },
            EventKind::TimerExpired { timer: TimerId { epoch: 0, purpose: TimerPurpose::Observe } },
            EventKind::GazeChanged { gaze: Gaze::Toward },
            EventKind::ActivityChanged { text: "x".into() },
        ];
        let mut events: Vec<_> = kinds.into_iter().map(|k| ev(5.0, k)).collect();
        events.push(ev(4.0, EventKind::PersonDeparted));
        events.sort_by(SituationEvent::queue_order);
        let names: Vec<_> = events.iter().map(|e| e.kind.name()).collect();
        assert_eq!(
            names,
            [
                "person-departed",
                "activity-changed",
                "gaze-changed",
                "timer-expired",
                "action-completed",
                "person-departed"
            ]
        );
    }

    #[test]
    fn log_line_shape() {
        assert_eq!(
            trigger_log_line(3.5, Stage::WaitTime, "arm", "wait for cue"),
            "t=3.50 stage=2-wait cause=arm action=wait for cue"
        );
    }

    fn walking_state(skill: &SkillSpec, action: &str) -> SkillState {
        let mut state = SkillState::idle();
        state.begin_action(skill, action, 0.0, "talking on a phone").unwrap();
        state
    }

    #[test]
    fn round_maps_reply_and_hides_action_text_when_disabled() {
        let skill = engage_skill();
        let state = walking_state(&skill, "wait");
        let human = HumanSituation::from_activity("putting the phone away", false);
        for enabled in [true, false] {
            let stub = Stub::new(
                r#"{"action": "The robot should wait until the person makes eye contact or pauses.", "reason": "r"}"#,
                "",
                "",
            );
            let seen = stub.seen.clone();
            let mut gw = Gateway::new(stub);
            let options = PlanningOptions {
                action_text_enabled: enabled,
                ..PlanningOptions::default()
            };
            let round = run_planning_round(&mut gw, &skill, &state, &human, &options, None, 8.0).unwrap();
            assert_eq!(round.actions, ["wait for cue"]);
            let prompt = seen.lock().unwrap()[0].situation().to_string();
            assert_eq!(prompt.contains("waiting for the human to finish"), enabled, "{prompt}");
        }
    }

    #[test]
    fn all_unmapped_is_an_error_in_experiment_mode_only() {
        let skill = engage_skill();
        let state = walking_state(&skill, "approach");
        let human = HumanSituation::from_activity("walking by", false);
        let reply = r#"{"action": "The robot should perform a backflip.", "reason": "r"}"#;
        let mut gw = Gateway::new(Stub::new(reply, "", ""));
        let err = run_planning_round(&mut gw, &skill, &state, &human, &PlanningOptions::default(), None, 1.0);
        assert!(matches!(err, Err(PlanningError::Unmapped { .. })));

        let live = PlanningOptions {
            mode: MappingMode::Live,
            ..PlanningOptions::default()
        };
        let mut ledger = RegistrationLedger::in_memory();
        let mut gw = Gateway::new(Stub::new(reply, "", ""));
        let round = run_planning_round(&mut gw, &skill, &state, &human, &live, Some(&mut ledger), 1.0).unwrap();
        assert!(round.actions.is_empty());
        assert_eq!(ledger.records().len(), 1);
        assert_eq!(ledger.records()[0].timestamp, 1.0);
    }
}

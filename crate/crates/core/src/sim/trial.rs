//! One trial: a synchronous event loop on a virtual clock that interleaves
//! scenario events, triggers, planning rounds and simulated execution.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};

use serde::Serialize;

use super::robot::SimRobot;
use super::scenario::ScenarioScript;
use super::timeline::{EndReason, Entry, Timeline};
use crate::engage::DEFAULT_PHRASE;
use crate::events::{
    arm, on_event, robot_situation, run_planning_round, ArmedStimuli, EventKind, PlanningError, PlanningOptions,
    PlanningRound, SituationEvent, TimerPurpose, TriggerCause, DEFAULT_OBSERVE_INTERVAL_S,
};
use crate::llm::{build_stage1_messages, ChatClient, Gateway, HumanSituation, Prompt, Stage};
use crate::mapper::{RegistrationLedger, RegistrationRecord};
use crate::skill::{ActionSpec, NominalDuration, Phase, SkillSpec, SkillState};

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOptions {
    pub planning: PlanningOptions,
    pub observe_interval_s: f64,
    /// Simulated delay between a stage-1 call and acting on its plan.
    pub llm_latency_s: f64,
    pub default_phrase: String,
}

impl Default for TrialOptions {
    fn default() -> Self {
        Self {
            planning: PlanningOptions::default(),
            observe_interval_s: DEFAULT_OBSERVE_INTERVAL_S,
            llm_latency_s: 0.0,
            default_phrase: DEFAULT_PHRASE.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "detail", rename_all = "kebab-case")]
pub enum FailureKind {
    SpokeNotReady,
    Timeout,
    RuntimeError(String),
}

impl FailureKind {
    pub fn label(&self) -> &'static str {
        match self {
            Self::SpokeNotReady => "spoke-not-ready",
            Self::Timeout => "timeout",
            Self::RuntimeError(_) => "runtime-error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub scenario_id: String,
    pub trial_index: u32,
    pub success: bool,
    pub failure_kind: Option<FailureKind>,
    pub action_counts: BTreeMap<String, u32>,
    pub spoke_at: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub result: TrialResult,
    pub timeline: Timeline,
    /// Every prompt sent, in order.
    pub prompts: Vec<Prompt>,
    /// Drafts for clauses no action matched.
    pub registrations: Vec<RegistrationRecord>,
}

pub fn run_trial(
    skill: &SkillSpec,
    script: &ScenarioScript,
    client: &mut dyn ChatClient,
    trial_index: u32,
    options: &TrialOptions,
) -> TrialOutcome {
    let mut run = Run {
        skill,
        script,
        options,
        gateway: Gateway::new(client),
        ledger: RegistrationLedger::in_memory(),
        timeline: Timeline::default(),
        state: SkillState::idle(),
        robot: SimRobot::new(),
        armed: None,
        running: false,
        pending_plan: None,
        queue: BinaryHeap::new(),
        seq: 0,
        activity: String::new(),
        looking: false,
    };
    let outcome = run.execute();
    let end_at = match &outcome {
        Ok(t) | Err((t, _)) => *t,
    };
    run.finish(end_at, trial_index, outcome.err().map(|(_, e)| e))
}

enum Item {
    Situation(EventKind),
    PlanReady { epoch: u64, round: PlanningRound },
}

struct Queued {
    at: f64,
    rank: u8,
    seq: u64,
    item: Item,
}

impl Queued {
    fn key(&self) -> (f64, u8, u64) {
        (self.at, self.rank, self.seq)
    }
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b) = (self.key(), other.key());
        a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
    }
}

struct Run<'a> {
    skill: &'a SkillSpec,
    script: &'a ScenarioScript,
    options: &'a TrialOptions,
    gateway: Gateway<'a>,
    ledger: RegistrationLedger,
    timeline: Timeline,
    state: SkillState,
    robot: SimRobot,
    armed: Option<ArmedStimuli>,
    /// Whether the current action is still executing.
    running: bool,
    /// Epoch of a plan still in flight under simulated latency.
    pending_plan: Option<u64>,
    queue: BinaryHeap<Reverse<Queued>>,
    seq: u64,
    activity: String,
    looking: bool,
}

type StepResult = Result<bool, String>;

impl Run<'_> {
    fn schedule(&mut self, at: f64, item: Item) {
        let rank = match &item {
            Item::Situation(kind) => kind.tie_rank(),
            Item::PlanReady { .. } => 5,
        };
        self.seq += 1;
        self.queue.push(Reverse(Queued {
            at,
            rank,
            seq: self.seq,
            item,
        }));
    }

    fn pop_batch(&mut self, at: f64) -> Vec<Item> {
        let mut batch = Vec::new();
        while self.queue.peek().is_some_and(|q| q.0.at <= at) {
            batch.push(self.queue.pop().expect("peeked").0.item);
        }
        batch
    }

    /// Runs until the trial stops; returns the stop time, or the time and
    /// detail of a runtime error.
    fn execute(&mut self) -> Result<f64, (f64, String)> {
        let horizon = self.script.duration_s;
        for event in super::scenario::publish_events(self.script) {
            if event.at < horizon {
                self.schedule(event.at, Item::Situation(event.kind));
            }
        }
        // t=0 events only establish the initial state.
        for item in self.pop_batch(0.0) {
            if let Item::Situation(kind) = item {
                if self.observe(0.0, &kind) {
                    return Ok(0.0);
                }
            }
        }
        let start = self.skill.starting_action.clone();
        self.begin(&start, 0.0, false).map_err(|e| (0.0, e))?;

        while let Some(at) = self.queue.peek().map(|q| q.0.at) {
            if at >= horizon {
                break;
            }
            let batch = self.pop_batch(at);
            if self.step(at, batch).map_err(|e| (at, e))? {
                return Ok(at);
            }
        }
        Ok(horizon)
    }

    /// Applies a published situation change. Returns true on departure.
    fn observe(&mut self, at: f64, kind: &EventKind) -> bool {
        match kind {
            EventKind::ActivityChanged { text } => self.activity = text.clone(),
            EventKind::GazeChanged { gaze } => self.looking = *gaze == crate::events::Gaze::Toward,
            EventKind::PersonDeparted => {}
            EventKind::TimerExpired { .. } | EventKind::ActionCompleted { .. } => return false,
        }
        self.timeline.push(at, Entry::EventPublished { event: kind.clone() });
        matches!(kind, EventKind::PersonDeparted)
    }

    /// Processes every item due at `at`. Returns true when the trial ends.
    fn step(&mut self, at: f64, batch: Vec<Item>) -> StepResult {
        let mut events = Vec::new();
        let mut ready = Vec::new();
        for item in batch {
            match item {
                Item::Situation(kind) => events.push(SituationEvent::new(at, kind)),
                Item::PlanReady { epoch, round } => ready.push((epoch, round)),
            }
        }

        // Situation first, so triggers see the state at `at`.
        for e in &events {
            if self.observe(at, &e.kind) {
                return Ok(true);
            }
        }

        let mut completed = false;
        for e in &events {
            match &e.kind {
                EventKind::ActionCompleted { action, epoch }
                    if *epoch == self.state.epoch && *action == self.state.current_action && self.running =>
                {
                    self.timeline.push(
                        at,
                        Entry::ActionEnded {
                            action: action.clone(),
                            reason: EndReason::Completed,
                        },
                    );
                    self.robot.complete();
                    self.running = false;
                    completed = true;
                    if self.skill.is_end(action) {
                        self.state.complete_current(self.skill);
                        return Ok(true);
                    }
                }
                EventKind::TimerExpired { timer }
                    if timer.epoch == self.state.epoch && timer.purpose == TimerPurpose::Observe =>
                {
                    let next = at + self.options.observe_interval_s;
                    self.schedule(next, Item::Situation(e.kind.clone()));
                }
                _ => {}
            }
        }

        let mut planned = false;
        for (epoch, round) in ready {
            if epoch == self.state.epoch {
                self.pending_plan = None;
                self.apply_round(at, round)?;
                planned = true;
            }
        }
        if planned {
            return Ok(false);
        }

        let cause = self
            .armed
            .as_ref()
            .and_then(|armed| events.iter().find_map(|e| on_event(armed, e).cause()));
        match cause {
            Some(TriggerCause::Completion) if !self.state.pending_queue.is_empty() => self.advance_queue(at)?,
            Some(_) if self.pending_plan == Some(self.state.epoch) => {}
            Some(cause) => self.plan(at, cause)?,
            None if completed => self.advance_queue(at)?,
            None => {}
        }
        Ok(false)
    }

    fn advance_queue(&mut self, at: f64) -> Result<(), String> {
        if let Some(next) = self.state.next_queued() {
            self.begin(&next, at, true)?;
        }
        Ok(())
    }

    fn plan(&mut self, at: f64, cause: TriggerCause) -> Result<(), String> {
        let human = HumanSituation::from_activity(&self.activity, self.looking);
        let robot = robot_situation(self.skill, &self.state, self.options.planning.action_text_enabled)
            .map_err(|e| e.to_string())?;
        self.timeline.push(
            at,
            Entry::Stage1Called {
                cause,
                action: self.state.current_action.clone(),
                digest: build_stage1_messages(&robot, &human).digest(),
            },
        );
        let round = run_planning_round(
            &mut self.gateway,
            self.skill,
            &self.state,
            &human,
            &self.options.planning,
            Some(&mut self.ledger),
            at,
        )
        .map_err(|e: PlanningError| e.to_string())?;
        if self.options.llm_latency_s > 0.0 {
            self.pending_plan = Some(self.state.epoch);
            let epoch = self.state.epoch;
            self.schedule(at + self.options.llm_latency_s, Item::PlanReady { epoch, round });
            Ok(())
        } else {
            self.apply_round(at, round)
        }
    }

    fn apply_round(&mut self, at: f64, round: PlanningRound) -> Result<(), String> {
        self.timeline.push(
            at,
            Entry::PlanMapped {
                response: round.plan.as_ref().map(|p| p.action_raw.clone()),
                actions: round.actions.clone(),
                unmapped: round
                    .mapping
                    .as_ref()
                    .map(|m| m.unmapped.iter().map(|c| c.text.clone()).collect())
                    .unwrap_or_default(),
            },
        );
        if round.actions.is_empty() {
            // Nothing usable: keep the current action, or move on if it is done.
            if !self.running {
                self.advance_queue(at)?;
            }
            return Ok(());
        }
        let speech = round.plan.and_then(|p| p.speech_content);
        match self.state.accept_plan(self.skill, &round.actions, speech) {
            Some(first) => self.begin(&first, at, false),
            None => Ok(()),
        }
    }

    fn nominal(&self, spec: &ActionSpec) -> NominalDuration {
        match (spec.nominal_duration, self.script.durations.get(&spec.name)) {
            (NominalDuration::Seconds(_), Some(&s)) => NominalDuration::Seconds(s),
            (d, _) => d,
        }
    }

    fn begin(&mut self, name: &str, at: f64, from_queue: bool) -> Result<(), String> {
        let skill = self.skill;
        let spec = skill.require(name).map_err(|e| e.to_string())?;
        if self.running && !self.state.current_action.is_empty() {
            self.timeline.push(
                at,
                Entry::ActionEnded {
                    action: self.state.current_action.clone(),
                    reason: EndReason::Preempted,
                },
            );
        }
        self.state
            .begin_action(skill, name, at, &self.activity)
            .map_err(|e| e.to_string())?;
        let action_text = match &spec.action_text {
            Some(_) => Some(
                crate::skill::render_action_text(spec, &self.state.captured_activity, &skill.environment)
                    .map_err(|e| e.to_string())?,
            ),
            None => None,
        };
        self.timeline.push(
            at,
            Entry::ActionStarted {
                action: name.to_string(),
                captured_activity: self.state.captured_activity.clone(),
                action_text,
                from_queue,
            },
        );

        let nominal = self.nominal(spec);
        let remaining = self.robot.remaining(spec, nominal);
        if let Some(done) = self.robot.execute(spec, nominal, at) {
            let epoch = self.state.epoch;
            self.schedule(
                done,
                Item::Situation(EventKind::ActionCompleted {
                    action: name.to_string(),
                    epoch,
                }),
            );
        }
        self.running = true;

        if skill.is_end(name) {
            self.armed = None;
            let text = self
                .state
                .speech_content
                .clone()
                .unwrap_or_else(|| self.options.default_phrase.clone());
            self.timeline.push(at, Entry::Spoke { text });
            return Ok(());
        }

        let armed = arm(
            spec,
            &self.state.captured_activity,
            at,
            self.state.epoch,
            remaining,
            self.options.observe_interval_s,
            &mut self.gateway,
        )
        .map_err(|e| e.to_string())?;
        if let Some(wait) = &armed.wait_time {
            self.timeline.push(
                at,
                Entry::Stage2Asked {
                    stage: Stage::WaitTime,
                    action: name.to_string(),
                    activity: self.state.captured_activity.clone(),
                    answer: wait.value.to_string(),
                    fallback: wait.fallback,
                },
            );
        }
        if let Some(probe) = &armed.lose_person_probe {
            self.timeline.push(
                at,
                Entry::Stage2Asked {
                    stage: Stage::LosePerson,
                    action: name.to_string(),
                    activity: self.state.captured_activity.clone(),
                    answer: if probe.answer { "yes" } else { "no" }.into(),
                    fallback: probe.fallback,
                },
            );
        }
        for (when, timer) in armed.initial_timers() {
            self.schedule(when, Item::Situation(EventKind::TimerExpired { timer }));
        }
        self.armed = Some(armed);
        Ok(())
    }

    fn finish(mut self, end_at: f64, trial_index: u32, error: Option<String>) -> TrialOutcome {
        if self.running && self.state.phase == Phase::Running {
            self.timeline.push(
                end_at,
                Entry::ActionEnded {
                    action: self.state.current_action.clone(),
                    reason: EndReason::Truncated,
                },
            );
            if self.skill.is_end(&self.state.current_action) {
                self.state.phase = Phase::CompletedEnd;
            }
        }
        self.state.time_out();

        let spoke_at = self.timeline.spoke_at().first().copied();
        let failure_kind = match (error, spoke_at) {
            (Some(detail), _) => Some(FailureKind::RuntimeError(detail)),
            (None, Some(t)) if self.script.label_at(t).engageable() => None,
            (None, Some(_)) => Some(FailureKind::SpokeNotReady),
            (None, None) => Some(FailureKind::Timeout),
        };
        let result = TrialResult {
            scenario_id: self.script.id.clone(),
            trial_index,
            success: failure_kind.is_none(),
            failure_kind,
            action_counts: self.timeline.action_counts(),
            spoke_at,
        };
        TrialOutcome {
            result,
            timeline: self.timeline,
            prompts: self.gateway.into_issued(),
            registrations: self.ledger.records().to_vec(),
        }
    }
}

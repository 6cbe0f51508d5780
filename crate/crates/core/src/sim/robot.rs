//! Simulated robot: actions are timed commands, and interruptible ones
//! remember how far they got.

use std::collections::BTreeMap;

use crate::skill::{ActionSpec, NominalDuration};

#[derive(Debug, Clone, PartialEq)]
pub struct Command {
    pub action: String,
    pub started_at: f64,
    /// Time this command needs from `started_at`; `None` runs until replaced.
    pub duration: Option<f64>,
    interruptible: bool,
}

impl Command {
    pub fn completes_at(&self) -> Option<f64> {
        self.duration.map(|d| self.started_at + d)
    }
}

#[derive(Debug, Clone, Default)]
pub struct SimRobot {
    current: Option<Command>,
    /// Seconds already done on preempted interruptible actions.
    progress: BTreeMap<String, f64>,
}

impl SimRobot {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn current(&self) -> Option<&Command> {
        self.current.as_ref()
    }

    /// Time left on `action` if it were started now.
    pub fn remaining(&self, action: &ActionSpec, nominal: NominalDuration) -> Option<f64> {
        let total = nominal.seconds()?;
        let done = self.progress.get(&action.name).copied().unwrap_or(0.0);
        Some((total - done).max(0.0))
    }

    /// Starts `action`, preempting whatever runs. Returns the completion
    /// time, or `None` for actions that only end when replaced.
    pub fn execute(&mut self, action: &ActionSpec, nominal: NominalDuration, now: f64) -> Option<f64> {
        self.preempt(now);
        let duration = self.remaining(action, nominal);
        let command = Command {
            action: action.name.clone(),
            started_at: now,
            duration,
            interruptible: action.interruptible,
        };
        let done = command.completes_at();
        self.current = Some(command);
        done
    }

    /// Stops the running command; interruptible actions keep their progress.
    pub fn preempt(&mut self, now: f64) {
        if let Some(cmd) = self.current.take() {
            if let (true, Some(_)) = (cmd.interruptible, cmd.duration) {
                let ran = (now - cmd.started_at).max(0.0);
                *self.progress.entry(cmd.action).or_insert(0.0) += ran;
            }
        }
    }

    /// Marks the running command finished; a later start begins from scratch.
    pub fn complete(&mut self) {
        if let Some(cmd) = self.current.take() {
            self.progress.remove(&cmd.action);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engage::engage_skill;

    #[test]
    fn pause_cancels_approach_midway() {
        let skill = engage_skill();
        let (approach, pause) = (skill.action("approach").unwrap(), skill.action("pause").unwrap());
        let mut robot = SimRobot::new();
        assert_eq!(robot.execute(approach, approach.nominal_duration, 0.0), Some(6.0));
        assert_eq!(robot.execute(pause, pause.nominal_duration, 3.0), Some(3.5));
        assert_eq!(robot.current().unwrap().action, "pause");
        // Resuming picks up the remaining three seconds.
        robot.complete();
        assert_eq!(robot.execute(approach, approach.nominal_duration, 3.5), Some(6.5));
    }

    #[test]
    fn completed_approach_starts_over() {
        let skill = engage_skill();
        let approach = skill.action("approach").unwrap();
        let mut robot = SimRobot::new();
        robot.execute(approach, approach.nominal_duration, 0.0);
        robot.complete();
        assert_eq!(robot.execute(approach, approach.nominal_duration, 8.0), Some(14.0));
    }

    #[test]
    fn waits_are_unbounded() {
        let skill = engage_skill();
        let wait = skill.action("wait").unwrap();
        let mut robot = SimRobot::new();
        assert_eq!(robot.execute(wait, wait.nominal_duration, 1.0), None);
    }

    #[test]
    fn non_interruptible_progress_not_kept() {
        let skill = engage_skill();
        let (eye, pause) = (skill.action("eye contact").unwrap(), skill.action("pause").unwrap());
        let mut robot = SimRobot::new();
        robot.execute(eye, eye.nominal_duration, 0.0);
        robot.execute(pause, pause.nominal_duration, 0.2);
        assert_eq!(robot.remaining(eye, eye.nominal_duration), Some(0.5));
    }
}

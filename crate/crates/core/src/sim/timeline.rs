//! Per-trial record of everything that happened, with a JSON-lines export
//! and a compact ASCII chart.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use super::scenario::{EngageLabel, ScenarioScript};
use crate::events::{trigger_log_line, EventKind, TriggerCause};
use crate::llm::Stage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    Completed,
    Preempted,
    /// Cut short by the end of the trial.
    Truncated,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "entry", rename_all = "snake_case")]
pub enum Entry {
    EventPublished {
        #[serde(flatten)]
        event: EventKind,
    },
    ActionStarted {
        action: String,
        captured_activity: String,
        #[serde(skip_serializing_if = "Option::is_none")]
        action_text: Option<String>,
        from_queue: bool,
    },
    ActionEnded {
        action: String,
        reason: EndReason,
    },
    Stage2Asked {
        stage: Stage,
        action: String,
        activity: String,
        answer: String,
        fallback: bool,
    },
    Stage1Called {
        cause: TriggerCause,
        action: String,
        digest: String,
    },
    PlanMapped {
        #[serde(skip_serializing_if = "Option::is_none")]
        response: Option<String>,
        actions: Vec<String>,
        unmapped: Vec<String>,
    },
    Spoke {
        text: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimedEntry {
    pub at: f64,
    #[serde(flatten)]
    pub entry: Entry,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Timeline {
    pub entries: Vec<TimedEntry>,
}

impl Timeline {
    pub fn push(&mut self, at: f64, entry: Entry) {
        debug_assert!(self.entries.last().is_none_or(|e| e.at <= at), "timeline went backwards");
        self.entries.push(TimedEntry { at, entry });
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("timeline entry serializes"));
            out.push('\n');
        }
        out
    }

    /// How many times each action was started.
    pub fn action_counts(&self) -> BTreeMap<String, u32> {
        let mut counts = BTreeMap::new();
        for e in &self.entries {
            if let Entry::ActionStarted { action, .. } = &e.entry {
                *counts.entry(action.clone()).or_insert(0) += 1;
            }
        }
        counts
    }

    pub fn stage1_times(&self) -> Vec<f64> {
        let mut times: Vec<f64> = self
            .entries
            .iter()
            .filter(|e| matches!(e.entry, Entry::Stage1Called { .. }))
            .map(|e| e.at)
            .collect();
        times.dedup();
        times
    }

    pub fn spoke_at(&self) -> Vec<f64> {
        self.entries
            .iter()
            .filter(|e| matches!(e.entry, Entry::Spoke { .. }))
            .map(|e| e.at)
            .collect()
    }

    /// One line per language-model call.
    pub fn trigger_log(&self) -> Vec<String> {
        self.entries
            .iter()
            .filter_map(|e| match &e.entry {
                Entry::Stage1Called { cause, action, .. } => {
                    Some(trigger_log_line(e.at, Stage::Plan, cause.as_str(), action))
                }
                Entry::Stage2Asked { stage, action, .. } => Some(trigger_log_line(e.at, *stage, "arm", action)),
                _ => None,
            })
            .collect()
    }

    /// Action intervals `(start, end, name)`; an unfinished action runs to `horizon`.
    pub fn action_spans(&self, horizon: f64) -> Vec<(f64, f64, String)> {
        let mut spans: Vec<(f64, f64, String)> = Vec::new();
        let mut open: Option<(f64, String)> = None;
        for e in &self.entries {
            match &e.entry {
                Entry::ActionStarted { action, .. } => {
                    if let Some((start, name)) = open.take() {
                        spans.push((start, e.at, name));
                    }
                    open = Some((e.at, action.clone()));
                }
                Entry::ActionEnded { action, .. } => {
                    if let Some((start, name)) = open.take_if(|(_, n)| n == action) {
                        spans.push((start, e.at, name));
                    }
                }
                _ => {}
            }
        }
        if let Some((start, name)) = open {
            spans.push((start, horizon, name));
        }
        spans
    }

    /// Chart with one column per `step` seconds: label, activity, gaze,
    /// running action, and model calls (`1` plan, `*` plan after a wait
    /// deadline, `2` second-stage question).
    pub fn render_ascii(&self, script: &ScenarioScript, step: f64) -> String {
        let cells = (script.duration_s / step).ceil() as usize + 1;
        let at = |i: usize| i as f64 * step;
        let cell_of = |t: f64| ((t / step).round() as usize).min(cells - 1);
        let mut out = String::new();

        // Whole-second ticks, skipping any that would collide.
        let mut ruler = vec![b' '; cells];
        let mut free = 0;
        for second in 0..=script.duration_s.floor() as usize {
            let cell = cell_of(second as f64);
            let label = second.to_string();
            if cell >= free && cell + label.len() <= cells {
                ruler[cell..cell + label.len()].copy_from_slice(label.as_bytes());
                free = cell + label.len() + 1;
            }
        }
        row(&mut out, "t[s]", &String::from_utf8(ruler).unwrap());

        let label: String = (0..cells)
            .map(|i| match script.label_at(at(i)) {
                EngageLabel::NotReady => '-',
                EngageLabel::OkToEngage => 'o',
                EngageLabel::Ready => 'R',
            })
            .collect();
        row(&mut out, "engage label", &label);

        let mut activities: Vec<&str> = Vec::new();
        let activity: String = (0..cells)
            .map(|i| {
                let text = script.activity_at(at(i));
                let idx = activities.iter().position(|a| *a == text).unwrap_or_else(|| {
                    activities.push(text);
                    activities.len() - 1
                });
                (b'a' + idx as u8) as char
            })
            .collect();
        row(&mut out, "activity", &activity);

        let gaze: String = (0..cells).map(|i| if script.looking_at(at(i)) { '#' } else { '.' }).collect();
        row(&mut out, "gaze at robot", &gaze);

        let mut legend: Vec<String> = Vec::new();
        let mut actions = vec![' '; cells];
        for (start, end, name) in self.action_spans(script.duration_s) {
            let idx = legend.iter().position(|n| *n == name).unwrap_or_else(|| {
                legend.push(name.clone());
                legend.len() - 1
            });
            let symbol = (b'A' + idx as u8) as char;
            let (from, to) = (cell_of(start), cell_of(end).max(cell_of(start) + 1).min(cells));
            for c in &mut actions[from..to] {
                *c = symbol;
            }
        }
        row(&mut out, "action", &actions.iter().collect::<String>());

        let mut calls = vec![' '; cells];
        for e in &self.entries {
            let c = cell_of(e.at);
            match &e.entry {
                Entry::Stage1Called { cause, .. } => {
                    calls[c] = if *cause == TriggerCause::WaitDeadline { '*' } else { '1' };
                }
                Entry::Stage2Asked { .. } if calls[c] == ' ' => calls[c] = '2',
                _ => {}
            }
        }
        row(&mut out, "model call", &calls.iter().collect::<String>());

        out.push('\n');
        for (i, a) in activities.iter().enumerate() {
            let _ = writeln!(out, "  {} = {a}", (b'a' + i as u8) as char);
        }
        for (i, a) in legend.iter().enumerate() {
            let _ = writeln!(out, "  {} = {a}", (b'A' + i as u8) as char);
        }
        for e in &self.entries {
            if let Entry::Stage2Asked { stage, action, answer, .. } = &e.entry {
                let shown = match stage {
                    Stage::LosePerson => if answer == "yes" { "Y" } else { "N" }.to_string(),
                    _ => format!("{answer} s"),
                };
                let _ = writeln!(out, "  t={:.1} {action}: {shown}", e.at);
            }
        }
        out
    }
}

fn row(out: &mut String, name: &str, cells: &str) {
    let _ = writeln!(out, "{name:<14}|{}", cells.trim_end());
}

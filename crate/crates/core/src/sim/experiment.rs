//! Repeated trials over several scenarios, optionally in parallel, and the
//! success and frequency tables built from them.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use super::scenario::ScenarioScript;
use super::trial::{run_trial, TrialOptions, TrialOutcome, TrialResult};
use crate::llm::{ChatClient, LlmError};
use crate::skill::SkillSpec;

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub trials: u32,
    pub workers: usize,
    pub options: TrialOptions,
    /// Free-form id of the cassette bundle, echoed in the report.
    pub bundle: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActionFrequency {
    pub action: String,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialFailure {
    pub trial: u32,
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub trials: u32,
    pub successes: u32,
    pub frequencies: Vec<ActionFrequency>,
    pub failures: Vec<TrialFailure>,
}

impl ScenarioReport {
    pub fn frequency(&self, action: &str) -> Option<f64> {
        self.frequencies.iter().find(|f| f.action == action).map(|f| f.mean)
    }

    pub fn runtime_errors(&self) -> usize {
        self.failures.iter().filter(|f| f.kind == "runtime-error").count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub bundle: String,
    pub action_text: bool,
    pub scenarios: Vec<ScenarioReport>,
}

pub struct ExperimentRun {
    pub report: ExperimentReport,
    /// Outcomes ordered by scenario, then trial index.
    pub outcomes: Vec<TrialOutcome>,
}

/// Runs trials `1..=config.trials` of every scenario. `make_client` supplies
/// a fresh client per (scenario, trial); a factory error aborts the run
/// before any trial executes.
pub fn run_experiment<F>(
    skill: &SkillSpec,
    scripts: &[ScenarioScript],
    config: &ExperimentConfig,
    make_client: F,
) -> Result<ExperimentRun, LlmError>
where
    F: Fn(&ScenarioScript, u32) -> Result<Box<dyn ChatClient>, LlmError> + Sync,
{
    assert!(config.trials >= 1, "an experiment needs at least one trial");
    let mut jobs = Vec::new();
    for script in scripts {
        for trial in 1..=config.trials {
            jobs.push((script, trial, make_client(script, trial)?));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.max(1))
        .build()
        .map_err(|e| LlmError::Config(format!("worker pool: {e}")))?;
    let outcomes: Vec<TrialOutcome> = pool.install(|| {
        jobs.into_par_iter()
            .map(|(script, trial, mut client)| run_trial(skill, script, client.as_mut(), trial, &config.options))
            .collect()
    });
    let results: Vec<TrialResult> = outcomes.iter().map(|o| o.result.clone()).collect();
    let report = summarize(
        skill,
        scripts,
        &results,
        &config.bundle,
        config.options.planning.action_text_enabled,
    );
    Ok(ExperimentRun { report, outcomes })
}

/// Builds the report from per-trial results alone.
pub fn summarize(
    skill: &SkillSpec,
    scripts: &[ScenarioScript],
    results: &[TrialResult],
    bundle: &str,
    action_text: bool,
) -> ExperimentReport {
    let scenarios = scripts
        .iter()
        .map(|script| {
            let mine: Vec<&TrialResult> = results.iter().filter(|r| r.scenario_id == script.id).collect();
            let n = mine.len().max(1) as f64;
            let frequencies = skill
                .actions
                .iter()
                .map(|a| ActionFrequency {
                    action: a.name.clone(),
                    mean: mine
                        .iter()
                        .map(|r| r.action_counts.get(&a.name).copied().unwrap_or(0) as f64)
                        .sum::<f64>()
                        / n,
                })
                .collect();
            let failures = mine
                .iter()
                .filter_map(|r| {
                    r.failure_kind.as_ref().map(|k| TrialFailure {
                        trial: r.trial_index,
                        kind: k.label().into(),
                        detail: match k {
                            super::trial::FailureKind::RuntimeError(d) => Some(d.clone()),
                            _ => None,
                        },
                    })
                })
                .collect();
            ScenarioReport {
                scenario: script.id.clone(),
                trials: mine.len() as u32,
                successes: mine.iter().filter(|r| r.success).count() as u32,
                frequencies,
                failures,
            }
        })
        .collect();
    ExperimentReport {
        bundle: bundle.into(),
        action_text,
        scenarios,
    }
}

/// Column header for a scenario: `person-robot` becomes `-robot`.
fn column(id: &str) -> &str {
    id.strip_prefix("person").filter(|s| s.starts_with('-')).unwrap_or(id)
}

impl ExperimentReport {
    pub fn scenario(&self, id: &str) -> Option<&ScenarioReport> {
        self.scenarios.iter().find(|s| s.scenario == id)
    }

    pub fn render_success_table(&self) -> String {
        let width = self.scenarios.iter().map(|s| s.scenario.len()).max().unwrap_or(8).max(8);
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$} | success rate", "scenario");
        let _ = writeln!(out, "{}-+-{}", "-".repeat(width), "-".repeat(12));
        for s in &self.scenarios {
            let flag = match s.runtime_errors() {
                0 => String::new(),
                n => format!("  ({n} runtime error{})", if n == 1 { "" } else { "s" }),
            };
            let _ = writeln!(out, "{:<width$} | {} / {}{flag}", s.scenario, s.successes, s.trials);
        }
        out
    }

    pub fn render_frequency_table(&self) -> String {
        let mut out = String::new();
        let Some(first) = self.scenarios.first() else {
            return out;
        };
        let width = first.frequencies.iter().map(|f| f.action.len()).max().unwrap_or(6).max(6);
        let _ = write!(out, "{:<width$}", "action");
        for s in &self.scenarios {
            let _ = write!(out, " | {:>w$}", column(&s.scenario), w = column(&s.scenario).len().max(4));
        }
        out.push('\n');
        for (i, f) in first.frequencies.iter().enumerate() {
            let _ = write!(out, "{:<width$}", f.action);
            for s in &self.scenarios {
                let w = column(&s.scenario).len().max(4);
                let _ = write!(out, " | {:>w$.1}", s.frequencies.get(i).map_or(0.0, |f| f.mean));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

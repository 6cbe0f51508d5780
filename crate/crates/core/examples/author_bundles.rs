//! Regenerates the shipped cassette bundles under `data/bundles/`.
//!
//! Each trial is driven by a scripted policy (a fixed list of replies per
//! question kind) wrapped in a recorder, through the ordinary trial loop, so
//! every recorded key is one the runtime really produces.
//!
//!     cargo run -p planact-core --example author_bundles

use std::path::PathBuf;

use planact_core::engage::engage_skill;
use planact_core::llm::{CassetteBundle, ChatClient, LlmError, Prompt, RecordingClient, ScriptedClient, Stage, TrialScript};
use planact_core::sim::{load_scenario, run_trial, summarize, ScenarioScript, TrialOptions};
use planact_core::SkillSpec;

const STOP_GREET: &str = "The robot should stop, make eye contact, and respond with a friendly phrase.";
const SPEAK: &str = "The robot should gently announce its presence and ask if the person would like assistance.";
const GREET_SAY: &str = "The robot should greet the person and say \"Hello! Are you waiting for me?\"";
const GREET_WITH: &str = "The robot should greet the person with \"Hi, do you have a moment?\"";
const EYE_SPEAK: &str =
    "The robot should make eye contact and gently announce its presence and ask if the person would like assistance.";
const PAUSE_WAIT: &str = "The robot should pause its approach and wait until the person finishes the activity.";
const WAIT: &str = "The robot should wait until the person finishes the activity.";
const CUE: &str = "The robot should wait until the person makes eye contact or pauses.";
const STOP_CUE: &str = "The robot should stop and wait until the person makes eye contact or pauses.";
const PAUSE_CUE: &str = "The robot should pause and wait until the person makes eye contact or pauses.";
const APPROACH: &str = "The robot should gently move into the person's line of sight.";
const PAUSE: &str = "The robot should briefly pause its task.";

fn reason(action: &str) -> &'static str {
    match action {
        STOP_GREET => "The person is looking at the robot, so the robot can stop and engage politely.",
        PAUSE_WAIT | WAIT => "The person is busy and may not want to be interrupted.",
        CUE | STOP_CUE | PAUSE_CUE => "The person has not shown interest yet; a cue would signal readiness.",
        APPROACH => "The robot needs to be visible to the person before engaging.",
        PAUSE => "Stopping avoids startling the person.",
        _ => "The person appears available, so the robot can offer help.",
    }
}

/// Plain object, fenced block, or object inside prose, by trial.
fn wrap(trial: u32, object: String) -> String {
    match trial % 3 {
        0 => format!("```json\n{object}\n```"),
        1 => object,
        _ => format!("Here is how the robot should behave:\n{object}\nLet me know if you need anything else."),
    }
}

struct Policy {
    trial: u32,
    plans: Vec<&'static str>,
    waits: Vec<&'static str>,
    loses: Vec<&'static str>,
}

impl ChatClient for Policy {
    fn complete(&mut self, prompt: &Prompt) -> Result<String, LlmError> {
        let exhausted = || LlmError::Cassette(format!("trial {}: no reply left for {}", self.trial, prompt.digest()));
        let object = match prompt.stage {
            Stage::Plan => {
                let action = self.plans.first().copied().ok_or_else(exhausted)?;
                self.plans.remove(0);
                serde_json::json!({"action": action, "reason": reason(action)}).to_string()
            }
            Stage::WaitTime => {
                let w = self.waits.first().copied().ok_or_else(exhausted)?;
                self.waits.remove(0);
                let value = match w.parse::<f64>() {
                    Ok(v) if v.is_finite() => serde_json::json!(v),
                    _ => serde_json::json!(w),
                };
                serde_json::json!({"wait_time": value, "reason": "Typical time before the person signals."}).to_string()
            }
            Stage::LosePerson => {
                let a = self.loses.first().copied().ok_or_else(exhausted)?;
                self.loses.remove(0);
                serde_json::json!({"answer": a, "reason": "Depends on whether the person is moving."}).to_string()
            }
        };
        Ok(wrap(self.trial, object))
    }
}

type Plan = (Vec<&'static str>, Vec<&'static str>, Vec<&'static str>);

fn speak_variant(trial: u32) -> &'static str {
    [SPEAK, GREET_SAY, GREET_WITH][trial as usize % 3]
}

fn main_plan(scenario: &str, t: u32) -> Plan {
    match scenario {
        "person-robot" if t <= 7 => (vec![STOP_GREET], vec![], vec!["no"]),
        "person-robot" => (vec![[GREET_SAY, GREET_WITH, SPEAK][t as usize - 8]], vec![], vec!["no"]),
        "person-object" => {
            let last = if t <= 3 { EYE_SPEAK } else { speak_variant(t) };
            (vec![PAUSE_WAIT, CUE, last], vec!["inf", "3.0"], vec!["no"])
        }
        "person-environment" if t <= 8 => (vec![STOP_CUE, speak_variant(t)], vec!["2.0"], vec!["yes"]),
        "person-environment" => (vec![STOP_CUE, CUE], vec!["2.0", "2.0"], vec!["yes"]),
        "person-person" if t <= 8 => (vec![PAUSE_WAIT, CUE, speak_variant(t)], vec!["inf", "2.0"], vec!["no"]),
        "person-person" => (vec![PAUSE_WAIT, CUE, CUE], vec!["inf", "2.0", "2.0"], vec!["no"]),
        other => panic!("no policy for {other}"),
    }
}

fn ablation_plan(scenario: &str, t: u32) -> Plan {
    match scenario {
        "person-robot" => (vec![speak_variant(t)], vec![], vec!["no"]),
        "person-object" if t <= 4 => (vec![PAUSE_WAIT, CUE, speak_variant(t)], vec!["inf", "3.0"], vec!["no"]),
        "person-object" if t <= 8 => (vec![PAUSE_WAIT, APPROACH, PAUSE_WAIT], vec!["inf", "inf"], vec!["no", "no"]),
        "person-object" => (vec![PAUSE_WAIT, APPROACH, PAUSE, PAUSE_CUE], vec!["inf", "3.0"], vec!["no", "no"]),
        "person-environment" if t == 3 => (vec![PAUSE_CUE, CUE], vec!["2.0", "2.0"], vec!["yes"]),
        "person-environment" => (vec![CUE, CUE], vec!["2.0", "2.0"], vec!["yes"]),
        "person-person" => {
            let first = if t == 7 { WAIT } else { PAUSE_WAIT };
            (vec![first, CUE, CUE], vec!["inf", "2.0", "2.0"], vec!["no"])
        }
        other => panic!("no policy for {other}"),
    }
}

fn author(
    skill: &SkillSpec,
    script: &ScenarioScript,
    name: &str,
    action_text: bool,
    plan: fn(&str, u32) -> Plan,
) -> CassetteBundle {
    let mut options = TrialOptions::default();
    options.planning.action_text_enabled = action_text;
    let mut bundle = CassetteBundle::new(&script.id, name, action_text, skill);
    for trial in 1..=10 {
        let (plans, waits, loses) = plan(&script.id, trial);
        let mut recorder = RecordingClient::new(Policy {
            trial,
            plans,
            waits,
            loses,
        });
        let outcome = run_trial(skill, script, &mut recorder, trial, &options);
        if let Some(planact_core::sim::FailureKind::RuntimeError(e)) = &outcome.result.failure_kind {
            panic!("{} trial {trial}: {e}", script.id);
        }
        assert!(
            !outcome.timeline.to_jsonl().contains("\"fallback\":true"),
            "{} trial {trial} used a fallback answer",
            script.id
        );
        bundle.trials.push(TrialScript {
            trial,
            entries: recorder.into_recorded(),
        });
    }
    bundle
}

fn main() {
    let data = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data");
    let skill = engage_skill();
    let scripts: Vec<ScenarioScript> = ["person-robot", "person-object", "person-environment", "person-person"]
        .iter()
        .map(|id| load_scenario(&data.join("scenarios").join(format!("{id}.toml"))).expect("scenario loads"))
        .collect();

    for (name, action_text, plan) in [
        ("main", true, main_plan as fn(&str, u32) -> Plan),
        ("ablation", false, ablation_plan),
    ] {
        let dir = data.join("bundles").join(name);
        std::fs::create_dir_all(&dir).expect("bundle dir");
        let mut results = Vec::new();
        for script in &scripts {
            let bundle = author(&skill, script, name, action_text, plan);
            // Replay to confirm the recording is self-consistent.
            let mut options = TrialOptions::default();
            options.planning.action_text_enabled = action_text;
            for t in &bundle.trials {
                let mut client = ScriptedClient::new(t.entries.clone());
                let outcome = run_trial(&skill, script, &mut client, t.trial, &options);
                assert_eq!(client.remaining(), 0, "{} trial {} left entries", script.id, t.trial);
                results.push(outcome.result);
            }
            bundle.save(&dir.join(format!("{}.json", script.id))).expect("bundle written");
        }
        let report = summarize(&skill, &scripts, &results, name, action_text);
        println!("== {name}\n{}\n{}", report.render_success_table(), report.render_frequency_table());
    }
}

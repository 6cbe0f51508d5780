#![allow(dead_code)]

use std::collections::{BTreeMap, VecDeque};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use planact_core::engage::engage_skill;
use planact_core::llm::{CassetteBundle, ScriptedClient, Stage};
use planact_core::sim::{load_scenario, run_trial, Entry, ScenarioScript, Timeline, TrialOptions, TrialOutcome};
use planact_core::{SkillSpec, StimuliKind};

pub const SCENARIOS: [&str; 4] = ["person-robot", "person-object", "person-environment", "person-person"];
pub const ACTIONS: [&str; 6] = ["approach", "wait", "wait for cue", "eye contact", "pause", "speak"];

pub fn workspace() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().expect("workspace root")
}

pub fn data() -> PathBuf {
    workspace().join("data")
}

pub fn planact(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_planact"))
        .current_dir(workspace())
        .args(args)
        .output()
        .expect("planact runs")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn copy_dir(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for entry in std::fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let target = to.join(entry.file_name());
        if entry.path().is_dir() {
            copy_dir(&entry.path(), &target);
        } else {
            std::fs::copy(entry.path(), target).unwrap();
        }
    }
}

pub fn script(id: &str) -> ScenarioScript {
    load_scenario(&data().join("scenarios").join(format!("{id}.toml"))).expect("shipped scenario loads")
}

pub fn bundle(name: &str, id: &str) -> CassetteBundle {
    CassetteBundle::load(&data().join("bundles").join(name).join(format!("{id}.json"))).expect("shipped bundle loads")
}

/// Every trial of every shipped scenario, replayed from a bundle.
pub struct Replayed {
    pub skill: SkillSpec,
    pub bundle: String,
    pub runs: Vec<(ScenarioScript, CassetteBundle, TrialOutcome)>,
}

pub fn replay(name: &str, action_text: bool) -> Replayed {
    let skill = engage_skill();
    let mut options = TrialOptions::default();
    options.planning.action_text_enabled = action_text;
    let mut runs = Vec::new();
    for id in SCENARIOS {
        let script = script(id);
        let bundle = bundle(name, id);
        for t in 1..=10 {
            let mut client = ScriptedClient::new(bundle.trial(t).expect("trial recorded").entries.clone());
            let outcome = run_trial(&skill, &script, &mut client, t, &options);
            runs.push((script.clone(), bundle.clone(), outcome));
        }
    }
    Replayed {
        skill,
        bundle: name.into(),
        runs,
    }
}

pub fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-9
}

/// Stage-1 call times predicted from the scenario and the action rules
/// alone. The plans themselves are taken from the timeline's mapped plans
/// and second-stage answers; every instant where any rule could fire is
/// enumerated and checked.
pub fn oracle_stage1_times(skill: &SkillSpec, script: &ScenarioScript, timeline: &Timeline) -> Vec<f64> {
    const TICK: f64 = 1.0;
    let end = script
        .person_departs_at_s
        .map_or(script.duration_s, |d| d.min(script.duration_s));

    let mut plans: VecDeque<(f64, Vec<String>)> = VecDeque::new();
    let mut answers: Vec<(f64, Stage, String, String)> = Vec::new();
    for e in &timeline.entries {
        match &e.entry {
            Entry::PlanMapped { actions, .. } => plans.push_back((e.at, actions.clone())),
            Entry::Stage2Asked { stage, action, answer, .. } => {
                answers.push((e.at, *stage, action.clone(), answer.clone()))
            }
            _ => {}
        }
    }
    let answer = |at: f64, stage: Stage, action: &str| {
        answers
            .iter()
            .find(|(t, s, a, _)| close(*t, at) && *s == stage && a == action)
            .map(|(.., v)| v.clone())
    };

    let looking = |t: f64| script.gaze_toward.iter().any(|s| s.from_s <= t && t < s.to_s);
    let looking_before = |t: f64| script.gaze_toward.iter().any(|s| s.from_s < t && t <= s.to_s);
    let activity_changes: Vec<f64> = script.activity.iter().map(|s| s.from_s).filter(|t| *t > 0.0).collect();
    let mut gaze_edges: Vec<f64> = script.gaze_toward.iter().flat_map(|s| [s.from_s, s.to_s]).collect();
    gaze_edges.retain(|t| *t > 0.0);

    let mut calls = Vec::new();
    let mut queue: VecDeque<String> = VecDeque::new();
    let mut progress: BTreeMap<String, f64> = BTreeMap::new();
    let mut current = skill.starting_action.clone();
    let mut started = 0.0;
    loop {
        let spec = skill.action(&current).expect("known action");
        if spec.stimuli == StimuliKind::End {
            break;
        }
        let completion = spec.nominal_duration.seconds().map(|nominal| {
            let nominal = script.durations.get(&current).copied().unwrap_or(nominal);
            started + nominal - progress.get(&current).copied().unwrap_or(0.0)
        });
        let deadline = answer(started, Stage::WaitTime, &current).and_then(|a| a.parse::<f64>().ok()).filter(|w| w.is_finite()).map(|w| started + w);
        let observes = answer(started, Stage::LosePerson, &current).as_deref() == Some("yes");

        let mut candidates: Vec<f64> = activity_changes.iter().chain(&gaze_edges).copied().collect();
        candidates.extend(completion);
        candidates.extend(deadline);
        if observes {
            let mut k = 1.0;
            while started + k * TICK < end {
                candidates.push(started + k * TICK);
                k += 1.0;
            }
        }
        candidates.retain(|t| *t > started + 1e-9 && *t < end - 1e-9);
        candidates.sort_by(f64::total_cmp);

        let at = |x: Option<f64>, t: f64| x.is_some_and(|x| close(x, t));
        let mut next = None;
        for t in candidates {
            let activity = activity_changes.iter().any(|a| close(*a, t));
            let gaze_change = looking(t) != looking_before(t);
            let gaze_toward = gaze_change && looking(t);
            let done = at(completion, t);
            let situational = match spec.stimuli {
                StimuliKind::Type1Activity => activity || at(deadline, t),
                StimuliKind::Type1Gaze => gaze_toward || at(deadline, t),
                StimuliKind::Type2A => false,
                StimuliKind::Type2B => {
                    activity || gaze_change || (observes && ((t - started) / TICK - ((t - started) / TICK).round()).abs() < 1e-9)
                }
                StimuliKind::End => false,
            };
            let completes = done && matches!(spec.stimuli, StimuliKind::Type2A | StimuliKind::Type2B);
            if situational || completes {
                next = Some((t, situational, done));
                break;
            }
        }
        let Some((t, situational, done)) = next else { break };

        if done {
            progress.remove(&current);
        } else if spec.interruptible && completion.is_some() {
            *progress.entry(current.clone()).or_insert(0.0) += t - started;
        }
        started = t;
        if !situational && !queue.is_empty() {
            current = queue.pop_front().expect("non-empty");
            continue;
        }
        calls.push(t);
        let (_, actions) = plans.pop_front().expect("a mapped plan for every call");
        queue = actions.iter().skip(1).cloned().collect();
        current = actions[0].clone();
    }
    calls
}

/// The stage-1 key a call must carry, rebuilt by hand from the running
/// action and the scenario at that instant.
pub fn expected_stage1_keys(skill: &SkillSpec, script: &ScenarioScript, timeline: &Timeline, action_text: bool) -> Vec<String> {
    let goal = format!("The robot's task is to {}.", skill.robot_goal_template.replace("{E}", &skill.environment));
    let mut text: Option<String> = None;
    let mut keys = Vec::new();
    for e in &timeline.entries {
        match &e.entry {
            Entry::ActionStarted { action_text: t, .. } => text = t.clone(),
            Entry::Stage1Called { .. } => {
                let activity = script
                    .activity
                    .iter()
                    .find(|s| s.from_s <= e.at && e.at < s.to_s)
                    .map(|s| s.text.clone())
                    .expect("activity covers the call");
                let looking = script.gaze_toward.iter().any(|s| s.from_s <= e.at && e.at < s.to_s);
                let gaze = if looking {
                    "The person is looking at the robot."
                } else {
                    "The person is not looking at the robot."
                };
                let mut parts = vec![goal.clone()];
                if action_text {
                    parts.extend(text.clone());
                }
                parts.push(format!("The person is {activity}."));
                parts.push(gaze.to_string());
                let raw = format!("1 {}", parts.join(" "));
                keys.push(raw.split_whitespace().map(str::to_lowercase).collect::<Vec<_>>().join(" "));
            }
            _ => {}
        }
    }
    keys
}

mod common;

use common::*;

fn run_trial(scenario: &str, bundle: &str, trial: u32, out: &std::path::Path) -> std::process::Output {
    let scenario = data().join("scenarios").join(format!("{scenario}.toml"));
    let bundle = data().join("bundles").join(bundle);
    let trial = trial.to_string();
    let mut args = vec![
        "run",
        "--scenario",
        scenario.to_str().unwrap(),
        "--bundle",
        bundle.to_str().unwrap(),
        "--trial",
        &trial,
        "--out",
        out.to_str().unwrap(),
    ];
    if bundle.ends_with("ablation") {
        args.push("--no-action-text");
    }
    planact(&args)
}

#[test]
fn successful_trial_exits_zero_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_trial("person-object", "main", 1, dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    assert!(stdout(&out).contains("person-object trial 1: success"));
    for ext in ["timeline.jsonl", "timeline.txt", "triggers.log", "result.json"] {
        assert!(dir.path().join(format!("person-object-trial1.{ext}")).is_file(), "{ext}");
    }
    let result: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("person-object-trial1.result.json")).unwrap())
            .unwrap();
    assert_eq!(result["success"], true);
}

#[test]
fn timed_out_trial_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_trial("person-environment", "main", 9, dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("failure (timeout)"));
}

#[test]
fn bad_input_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_trial("no-such-scenario", "main", 1, dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error: "), "{err}");
    assert!(!err.contains("error: error:"), "{err}");
}

#[test]
fn bundle_and_flag_must_agree() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = data().join("scenarios/person-robot.toml");
    let bundle = data().join("bundles/ablation");
    let out = planact(&[
        "run",
        "--scenario",
        scenario.to_str().unwrap(),
        "--bundle",
        bundle.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--no-action-text"));
}

#[test]
fn direct_speech_trial_skips_eye_contact() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_trial("person-robot", "main", 8, dir.path());
    assert_eq!(out.status.code(), Some(0));
    let result: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("person-robot-trial8.result.json")).unwrap())
            .unwrap();
    let counts = &result["action_counts"];
    assert_eq!(counts["eye contact"].as_u64().unwrap_or(0), 0);
    assert_eq!(counts["speak"], 1);
}

#[test]
fn trigger_log_lines_are_parseable() {
    let dir = tempfile::tempdir().unwrap();
    run_trial("person-person", "main", 1, dir.path());
    let log = std::fs::read_to_string(dir.path().join("person-person-trial1.triggers.log")).unwrap();
    assert!(!log.is_empty());
    for line in log.lines() {
        let fields: Vec<&str> = line.split(' ').collect();
        assert!(fields[0].starts_with("t=") && fields[1].starts_with("stage=") && fields[2].starts_with("cause="));
        assert!(line.contains(" action="), "{line}");
    }
}

#[test]
fn experiment_prints_both_tables() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = data().join("bundles/main");
    let out = planact(&[
        "experiment",
        "--bundle",
        bundle.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--trials",
        "10",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("person-environment | 8 / 10"), "{text}");
    assert!(text.contains("wait for cue |    0.0 |     1.0 |          1.2 |     1.2"), "{text}");
    assert_eq!(std::fs::read_to_string(dir.path().join("tables.txt")).unwrap(), text);
    let timelines = std::fs::read_dir(dir.path().join("timelines")).unwrap().count();
    assert_eq!(timelines, 40 * 4);
}

#[test]
fn experiment_rejects_zero_trials() {
    let bundle = data().join("bundles/main");
    let out = planact(&["experiment", "--bundle", bundle.to_str().unwrap(), "--trials", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn validate_accepts_shipped_data_and_rejects_a_mutation() {
    let out = planact(&["validate", data().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));

    let dir = tempfile::tempdir().unwrap();
    copy_dir(&data(), dir.path());
    let path = dir.path().join("scenarios/person-person.toml");
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, text.replacen("duration_s", "duration_secs", 1)).unwrap();
    let out = planact(&["validate", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("person-person.toml: scenario:"), "{}", stdout(&out));
}

#[test]
fn validate_warns_on_unused_entries() {
    let dir = tempfile::tempdir().unwrap();
    copy_dir(&data(), dir.path());
    let path = dir.path().join("bundles/main/person-robot.json");
    let mut bundle: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let entries = bundle["trials"][0]["entries"].as_array_mut().unwrap();
    let extra = entries.last().unwrap().clone();
    entries.push(extra);
    std::fs::write(&path, serde_json::to_string(&bundle).unwrap()).unwrap();
    let out = planact(&["validate", dir.path().to_str().unwrap()]);
    let text = stdout(&out);
    assert_eq!(out.status.code(), Some(0), "{text}");
    assert!(text.contains("warning: ") && text.contains("1 unconsumed entry"), "{text}");
}

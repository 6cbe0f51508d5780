//! Consistency checks across a skill, its scenarios and cassette bundles,
//! including a dry run proving every recorded key is actually reached.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use super::scenario::{load_scenario, ScenarioScript};
use super::trial::{run_trial, FailureKind, TrialOptions};
use crate::llm::cassette::reference_digest;
use crate::llm::{CassetteBundle, ScriptedClient};
use crate::skill::{validate_skill, NominalDuration, SkillSpec};
use crate::validation::Violation;

/// Scenario fields that only make sense against a particular skill.
pub fn validate_scenario_for_skill(skill: &SkillSpec, script: &ScenarioScript) -> Vec<Violation> {
    let mut report = Vec::new();
    for name in script.durations.keys() {
        match skill.action(name) {
            None => report.push(Violation::error(
                format!("durations.{name}"),
                format!("skill {} has no action {name:?}", skill.name),
            )),
            Some(a) if a.nominal_duration == NominalDuration::Unbounded => report.push(Violation::error(
                format!("durations.{name}"),
                "action is unbounded and cannot take a duration",
            )),
            Some(_) => {}
        }
    }
    report
}

/// Checks one bundle against its scenario and dry-runs trials `1..=trials`.
pub fn validate_bundle(
    skill: &SkillSpec,
    script: &ScenarioScript,
    bundle: &CassetteBundle,
    trials: u32,
    options: &TrialOptions,
) -> Vec<Violation> {
    let mut report = Vec::new();
    if bundle.scenario != script.id {
        report.push(Violation::error(
            "scenario",
            format!("bundle is for {:?}, scenario is {:?}", bundle.scenario, script.id),
        ));
        return report;
    }

    for action in &skill.actions {
        let field = format!("reference_digests.{}", action.name);
        match bundle.reference_digests.get(&action.name) {
            None => report.push(Violation::error(field, "no digest recorded for this action")),
            Some(d) if *d != reference_digest(&action.reference_response) => report.push(Violation::error(
                field,
                format!("reference response of {:?} changed since recording", action.name),
            )),
            Some(_) => {}
        }
    }
    for name in bundle.reference_digests.keys() {
        if skill.action(name).is_none() {
            report.push(Violation::error(
                format!("reference_digests.{name}"),
                "digest for an action the skill does not define",
            ));
        }
    }

    let mut seen = BTreeSet::new();
    for (k, t) in bundle.trials.iter().enumerate() {
        if !seen.insert(t.trial) {
            report.push(Violation::error(format!("trials[{k}].trial"), format!("trial {} appears twice", t.trial)));
        }
    }
    let options = TrialOptions {
        planning: crate::events::PlanningOptions {
            action_text_enabled: bundle.action_text,
            ..options.planning.clone()
        },
        ..options.clone()
    };
    for trial in 1..=trials {
        let Some(k) = bundle.trials.iter().position(|t| t.trial == trial) else {
            report.push(Violation::error("trials", format!("no script for trial {trial}")));
            continue;
        };
        let mut client = ScriptedClient::new(bundle.trials[k].entries.clone());
        let outcome = run_trial(skill, script, &mut client, trial, &options);
        if let Some(FailureKind::RuntimeError(detail)) = outcome.result.failure_kind {
            report.push(Violation::error(
                format!("trials[{k}].entries[{}]", client.consumed()),
                format!("trial {trial}: {detail}"),
            ));
        } else if client.remaining() > 0 {
            report.push(Violation::warning(
                format!("trials[{k}].entries[{}]", client.consumed()),
                format!("trial {trial}: {} unconsumed entr{}", client.remaining(), if client.remaining() == 1 { "y" } else { "ies" }),
            ));
        }
    }
    report
}

/// Everything `validate` looks at, resolved to paths.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub skill: PathBuf,
    pub scenarios: Vec<PathBuf>,
    pub bundles: Vec<PathBuf>,
}

pub fn validate_corpus(corpus: &Corpus, trials: u32, options: &TrialOptions) -> Vec<Violation> {
    let mut report = Vec::new();
    let skill_file = corpus.skill.display().to_string();
    let skill = match SkillSpec::load(&corpus.skill) {
        Ok(s) => s,
        Err(e) => return vec![Violation::error("skill", e.to_string()).in_file(skill_file)],
    };
    let skill_report = validate_skill(&skill);
    let skill_ok = !skill_report.iter().any(Violation::is_error);
    report.extend(skill_report.into_iter().map(|v| v.in_file(&skill_file)));

    let mut scripts = Vec::new();
    for path in &corpus.scenarios {
        let file = path.display().to_string();
        match load_scenario(path) {
            Ok(script) => {
                report.extend(validate_scenario_for_skill(&skill, &script).into_iter().map(|v| v.in_file(&file)));
                scripts.push(script);
            }
            Err(errors) => report.extend(errors),
        }
    }

    for path in &corpus.bundles {
        let file = path.display().to_string();
        let bundle = match CassetteBundle::load(path) {
            Ok(b) => b,
            Err(e) => {
                report.push(Violation::error("bundle", e.to_string()).in_file(file));
                continue;
            }
        };
        let Some(script) = scripts.iter().find(|s| s.id == bundle.scenario) else {
            report.push(
                Violation::error("scenario", format!("no scenario {:?} among the inputs", bundle.scenario)).in_file(file),
            );
            continue;
        };
        if !skill_ok {
            continue;
        }
        report.extend(
            validate_bundle(&skill, script, &bundle, trials, options)
                .into_iter()
                .map(|v| v.in_file(&file)),
        );
    }
    report
}

/// Collects `*.toml` scenarios and `*.json` bundles under a data directory
/// laid out as `skills/`, `scenarios/` and `bundles/<name>/`.
pub fn discover_corpus(data_dir: &Path, skill: Option<&Path>) -> std::io::Result<Corpus> {
    fn files(dir: &Path, ext: &str, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
        if !dir.is_dir() {
            return Ok(());
        }
        let mut entries: Vec<_> = std::fs::read_dir(dir)?.collect::<Result<_, _>>()?;
        entries.sort_by_key(|e| e.path());
        for entry in entries {
            let path = entry.path();
            if path.is_dir() {
                files(&path, ext, out)?;
            } else if path.extension().is_some_and(|e| e == ext) {
                out.push(path);
            }
        }
        Ok(())
    }
    let mut corpus = Corpus {
        skill: skill.map_or_else(|| data_dir.join("skills").join("engage.toml"), Path::to_path_buf),
        ..Corpus::default()
    };
    files(&data_dir.join("scenarios"), "toml", &mut corpus.scenarios)?;
    files(&data_dir.join("bundles"), "json", &mut corpus.bundles)?;
    Ok(corpus)
}

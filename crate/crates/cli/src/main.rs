//! `planact`: run engage-skill trials and experiments against scenario
//! scripts, and validate the shipped data.
//!
//! Exit codes: 0 success, 1 failed verdict or validation errors, 2 bad
//! input or runtime error.

mod clients;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use log::info;

use clients::{bundle_path, live_client, save_recordings, scripted_client, LlmMode, Recordings, SinkRecorder};
use planact_core::events::MappingMode;
use planact_core::llm::{CassetteBundle, ChatClient};
use planact_core::mapper::RegistrationLedger;
use planact_core::sim::{
    discover_corpus, load_scenario, run_experiment, run_trial, validate_corpus, ExperimentConfig, FailureKind,
    ScenarioScript, TrialOptions, TrialOutcome,
};
use planact_core::validation::has_errors;
use planact_core::SkillSpec;

#[derive(Parser)]
#[command(name = "planact", version, about = "Plan-and-act skill simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one trial of one scenario and write its timeline.
    Run(RunArgs),
    /// Run N trials of several scenarios and print the report tables.
    Experiment(ExperimentArgs),
    /// Check the skill, scenarios and bundles for consistency.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct Common {
    /// Skill definition file.
    #[arg(long, default_value = "data/skills/engage.toml")]
    skill: PathBuf,
    /// Leave the running action's text out of planning prompts.
    #[arg(long)]
    no_action_text: bool,
    #[arg(long, value_enum, default_value_t = LlmMode::Scripted)]
    llm: LlmMode,
    /// Sampling seed forwarded to a live endpoint.
    #[arg(long)]
    seed: Option<u64>,
    /// Simulated seconds between a planning call and acting on it.
    #[arg(long, default_value_t = 0.0)]
    latency: f64,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    scenario: PathBuf,
    /// Bundle file, or a directory holding `<scenario>.json`.
    #[arg(long)]
    bundle: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    trial: u32,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    common: Common,
    /// Scenario files or directories; defaults to every script in data/scenarios.
    #[arg(long = "scenario", default_value = "data/scenarios")]
    scenarios: Vec<PathBuf>,
    /// Directory holding `<scenario>.json` bundles.
    #[arg(long)]
    bundle: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    trials: u32,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args)]
struct ValidateArgs {
    /// Data directory with skills/, scenarios/ and bundles/.
    #[arg(default_value = "data")]
    data: PathBuf,
    /// Skill file; defaults to skills/engage.toml inside the data directory.
    #[arg(long)]
    skill: Option<PathBuf>,
    /// Trial indices every bundle must cover.
    #[arg(long, default_value_t = 10)]
    trials: u32,
}

/// Failure that maps to exit code 2.
struct Fatal(String);

impl<E: std::fmt::Display> From<E> for Fatal {
    fn from(e: E) -> Self {
        Fatal(e.to_string())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Experiment(args) => cmd_experiment(args),
        Command::Validate(args) => cmd_validate(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Fatal(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn load_skill(path: &Path) -> Result<SkillSpec, Fatal> {
    let skill = SkillSpec::load(path)?;
    let report = planact_core::skill::validate_skill(&skill);
    if has_errors(&report) {
        let lines: Vec<String> = report.iter().map(|v| format!("  {v}")).collect();
        return Err(Fatal(format!("{} is invalid:\n{}", path.display(), lines.join("\n"))));
    }
    Ok(skill)
}

fn load_script(path: &Path) -> Result<ScenarioScript, Fatal> {
    load_scenario(path).map_err(|report| {
        let lines: Vec<String> = report.iter().map(|v| format!("  {v}")).collect();
        Fatal(format!("{} is invalid:\n{}", path.display(), lines.join("\n")))
    })
}

fn load_bundle(path: &Path, common: &Common) -> Result<CassetteBundle, Fatal> {
    let bundle = CassetteBundle::load(path)?;
    if bundle.action_text == common.no_action_text {
        return Err(Fatal(format!(
            "{} was recorded {} action text; {} --no-action-text",
            path.display(),
            if bundle.action_text { "with" } else { "without" },
            if bundle.action_text { "drop" } else { "pass" },
        )));
    }
    Ok(bundle)
}

fn trial_options(common: &Common) -> TrialOptions {
    let mut options = TrialOptions {
        llm_latency_s: common.latency,
        ..TrialOptions::default()
    };
    options.planning.action_text_enabled = !common.no_action_text;
    if common.llm != LlmMode::Scripted {
        options.planning.mode = MappingMode::Live;
    }
    options
}

fn write_trial(out: &Path, script: &ScenarioScript, outcome: &TrialOutcome) -> Result<(), Fatal> {
    std::fs::create_dir_all(out)?;
    let stem = format!("{}-trial{}", script.id, outcome.result.trial_index);
    std::fs::write(out.join(format!("{stem}.timeline.jsonl")), outcome.timeline.to_jsonl())?;
    std::fs::write(out.join(format!("{stem}.timeline.txt")), outcome.timeline.render_ascii(script, 0.5))?;
    std::fs::write(out.join(format!("{stem}.triggers.log")), outcome.timeline.trigger_log().join("\n") + "\n")?;
    let mut result = serde_json::to_string_pretty(&outcome.result)?;
    result.push('\n');
    std::fs::write(out.join(format!("{stem}.result.json")), result)?;
    Ok(())
}

fn append_registrations(out: &Path, outcomes: &[&TrialOutcome]) -> Result<(), Fatal> {
    if outcomes.iter().all(|o| o.registrations.is_empty()) {
        return Ok(());
    }
    let path = out.join("registrations.jsonl");
    let mut ledger = RegistrationLedger::open(&path)?;
    for record in outcomes.iter().flat_map(|o| &o.registrations) {
        let draft = planact_core::mapper::ActionDraft {
            name: record.proposed_name.clone(),
            reference_response: record.clause.clone(),
            stimuli: None,
        };
        if ledger.record(&draft, record.timestamp)? {
            println!("proposed new action {:?}: {}", record.proposed_name, record.clause);
        }
    }
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<u8, Fatal> {
    let common = &args.common;
    let skill = load_skill(&common.skill)?;
    let script = load_script(&args.scenario)?;
    let options = trial_options(common);
    let recordings = Recordings::default();
    let mut client: Box<dyn ChatClient> = match common.llm {
        LlmMode::Scripted => {
            let path = args
                .bundle
                .as_deref()
                .ok_or_else(|| Fatal("scripted mode needs --bundle".into()))?;
            let bundle = load_bundle(&bundle_path(path, &script.id), common)?;
            Box::new(scripted_client(&bundle, args.trial)?)
        }
        LlmMode::Live | LlmMode::Record => Box::new(SinkRecorder::new(
            Box::new(live_client(common.seed)?),
            &script.id,
            args.trial,
            Arc::clone(&recordings),
        )),
    };
    let outcome = run_trial(&skill, &script, client.as_mut(), args.trial, &options);
    write_trial(&common.out, &script, &outcome)?;
    append_registrations(&common.out, &[&outcome])?;
    if common.llm == LlmMode::Record {
        for path in save_recordings(&recordings, &skill, "recorded", !common.no_action_text, &common.out.join("bundles"))? {
            println!("recorded {}", path.display());
        }
    }

    print!("{}", outcome.timeline.render_ascii(&script, 0.5));
    for line in outcome.timeline.trigger_log() {
        println!("{line}");
    }
    let r = &outcome.result;
    match &r.failure_kind {
        None => {
            println!("{} trial {}: success (spoke at {:.1} s)", r.scenario_id, r.trial_index, r.spoke_at.unwrap_or(0.0));
            Ok(0)
        }
        Some(FailureKind::RuntimeError(detail)) => Err(Fatal(format!(
            "{} trial {}: runtime error: {detail}",
            r.scenario_id, r.trial_index
        ))),
        Some(kind) => {
            println!("{} trial {}: failure ({})", r.scenario_id, r.trial_index, kind.label());
            Ok(1)
        }
    }
}

fn scenario_files(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, Fatal> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(input)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "toml"))
                .collect();
            found.sort();
            files.extend(found);
        } else if input.exists() {
            files.push(input.clone());
        } else {
            return Err(Fatal(format!("{}: no such file or directory", input.display())));
        }
    }
    if files.is_empty() {
        return Err(Fatal("no scenario files given".into()));
    }
    Ok(files)
}

/// Canonical order for the shipped scenarios; others follow by id.
fn scenario_rank(id: &str) -> (usize, String) {
    const ORDER: [&str; 4] = ["person-robot", "person-object", "person-environment", "person-person"];
    (ORDER.iter().position(|o| *o == id).unwrap_or(ORDER.len()), id.to_string())
}

fn cmd_experiment(args: ExperimentArgs) -> Result<u8, Fatal> {
    let common = &args.common;
    if args.trials == 0 {
        return Err(Fatal("--trials must be at least 1".into()));
    }
    let skill = load_skill(&common.skill)?;
    let mut scripts = scenario_files(&args.scenarios)?
        .iter()
        .map(|p| load_script(p))
        .collect::<Result<Vec<_>, _>>()?;
    scripts.sort_by_key(|s| scenario_rank(&s.id));

    let mut bundles = Vec::new();
    if common.llm == LlmMode::Scripted {
        let dir = args
            .bundle
            .as_deref()
            .ok_or_else(|| Fatal("scripted mode needs --bundle".into()))?;
        for script in &scripts {
            bundles.push(load_bundle(&bundle_path(dir, &script.id), common)?);
        }
    }
    let bundle_name = bundles
        .first()
        .map(|b| b.bundle.clone())
        .unwrap_or_else(|| format!("{:?}", common.llm).to_lowercase());

    let config = ExperimentConfig {
        trials: args.trials,
        workers: args.workers,
        options: trial_options(common),
        bundle: bundle_name,
    };
    let recordings = Recordings::default();
    let live_seed = common.seed;
    let mode = common.llm;
    let started = std::time::Instant::now();
    let run = run_experiment(&skill, &scripts, &config, |script, trial| {
        Ok(match mode {
            LlmMode::Scripted => {
                let bundle = bundles.iter().find(|b| b.scenario == script.id).expect("bundle loaded per scenario");
                Box::new(scripted_client(bundle, trial)?) as Box<dyn ChatClient>
            }
            LlmMode::Live | LlmMode::Record => Box::new(SinkRecorder::new(
                Box::new(live_client(live_seed)?),
                &script.id,
                trial,
                Arc::clone(&recordings),
            )),
        })
    })?;
    info!("{} trials in {:.2?}", run.outcomes.len(), started.elapsed());

    let timelines = common.out.join("timelines");
    for outcome in &run.outcomes {
        let script = scripts
            .iter()
            .find(|s| s.id == outcome.result.scenario_id)
            .expect("outcome for a known scenario");
        write_trial(&timelines, script, outcome)?;
    }
    append_registrations(&common.out, &run.outcomes.iter().collect::<Vec<_>>())?;
    if common.llm == LlmMode::Record {
        for path in save_recordings(&recordings, &skill, "recorded", !common.no_action_text, &common.out.join("bundles"))? {
            println!("recorded {}", path.display());
        }
    }

    let report = &run.report;
    let tables = format!("{}\n{}", report.render_success_table(), report.render_frequency_table());
    std::fs::write(common.out.join("report.json"), report.to_json_string())?;
    std::fs::write(common.out.join("tables.txt"), &tables)?;
    print!("{tables}");

    let errors: usize = report.scenarios.iter().map(|s| s.runtime_errors()).sum();
    if errors > 0 {
        for s in &report.scenarios {
            for f in s.failures.iter().filter(|f| f.kind == "runtime-error") {
                eprintln!("{} trial {}: {}", s.scenario, f.trial, f.detail.as_deref().unwrap_or(""));
            }
        }
        return Err(Fatal(format!("{errors} trial(s) hit runtime errors")));
    }
    Ok(0)
}

fn cmd_validate(args: ValidateArgs) -> Result<u8, Fatal> {
    if !args.data.is_dir() {
        return Err(Fatal(format!("{}: not a directory", args.data.display())));
    }
    let corpus = discover_corpus(&args.data, args.skill.as_deref())?;
    let report = validate_corpus(&corpus, args.trials, &TrialOptions::default());
    for v in &report {
        println!("{v}");
    }
    let errors = report.iter().filter(|v| v.is_error()).count();
    println!(
        "checked 1 skill, {} scenarios, {} bundles: {errors} error(s), {} warning(s)",
        corpus.scenarios.len(),
        corpus.bundles.len(),
        report.len() - errors
    );
    Ok(if errors > 0 { 1 } else { 0 })
}

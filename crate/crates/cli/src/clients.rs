use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use planact_core::llm::{
    CassetteBundle, CassetteEntry, ChatClient, HttpChatClient, LiveConfig, LlmError, Prompt, ScriptedClient,
    TrialScript,
};
use planact_core::SkillSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum LlmMode {
    /// Replay a cassette bundle.
    Scripted,
    /// Query a chat-completions endpoint.
    Live,
    /// Query the endpoint and save what it answered as a new bundle.
    Record,
}

/// Recorded entries keyed by (scenario, trial), shared across workers.
pub type Recordings = Arc<Mutex<BTreeMap<(String, u32), Vec<CassetteEntry>>>>;

/// Forwards to a client and files each answered call under its trial.
pub struct SinkRecorder {
    inner: Box<dyn ChatClient>,
    key: (String, u32),
    sink: Recordings,
}

impl SinkRecorder {
    pub fn new(inner: Box<dyn ChatClient>, scenario: &str, trial: u32, sink: Recordings) -> Self {
        sink.lock()
            .expect("recordings lock")
            .insert((scenario.to_string(), trial), Vec::new());
        Self {
            inner,
            key: (scenario.to_string(), trial),
            sink,
        }
    }
}

impl ChatClient for SinkRecorder {
    fn complete(&mut self, prompt: &Prompt) -> Result<String, LlmError> {
        let response = self.inner.complete(prompt)?;
        self.sink
            .lock()
            .expect("recordings lock")
            .entry(self.key.clone())
            .or_default()
            .push(CassetteEntry {
                stage: prompt.stage,
                key: prompt.digest(),
                response: response.clone(),
            });
        Ok(response)
    }
}

pub fn live_client(seed: Option<u64>) -> Result<HttpChatClient, LlmError> {
    let mut config = LiveConfig::from_env()?;
    config.seed = seed;
    Ok(HttpChatClient::new(config))
}

pub fn scripted_client(bundle: &CassetteBundle, trial: u32) -> Result<ScriptedClient, LlmError> {
    let script = bundle.trial(trial).ok_or_else(|| {
        LlmError::Cassette(format!("bundle for {} has no script for trial {trial}", bundle.scenario))
    })?;
    Ok(ScriptedClient::new(script.entries.clone()))
}

/// Finds `<scenario>.json` when `path` is a directory.
pub fn bundle_path(path: &Path, scenario: &str) -> PathBuf {
    if path.is_dir() {
        path.join(format!("{scenario}.json"))
    } else {
        path.to_path_buf()
    }
}

/// Writes one bundle per scenario from the recordings.
pub fn save_recordings(
    recordings: &Recordings,
    skill: &SkillSpec,
    name: &str,
    action_text: bool,
    dir: &Path,
) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut bundles: BTreeMap<String, CassetteBundle> = BTreeMap::new();
    for ((scenario, trial), entries) in recordings.lock().expect("recordings lock").iter() {
        bundles
            .entry(scenario.clone())
            .or_insert_with(|| CassetteBundle::new(scenario.as_str(), name, action_text, skill))
            .trials
            .push(TrialScript {
                trial: *trial,
                entries: entries.clone(),
            });
    }
    let mut written = Vec::new();
    for (scenario, bundle) in bundles {
        let path = dir.join(format!("{scenario}.json"));
        bundle.save(&path)?;
        written.push(path);
    }
    Ok(written)
}

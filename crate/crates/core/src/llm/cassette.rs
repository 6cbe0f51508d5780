//! Recorded model replies, keyed by normalized prompt digest, one bundle
//! per scenario.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::prompt::{normalize, Stage};
use super::LlmError;
use crate::skill::SkillSpec;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub stage: Stage,
    pub key: String,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialScript {
    pub trial: u32,
    pub entries: Vec<CassetteEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CassetteBundle {
    pub scenario: String,
    #[serde(default)]
    pub bundle: String,
    /// Whether the recording ran with action text in the robot situation.
    #[serde(default = "yes")]
    pub action_text: bool,
    /// Fingerprint of each action's reference response at recording time.
    #[serde(default)]
    pub reference_digests: BTreeMap<String, String>,
    pub trials: Vec<TrialScript>,
}

fn yes() -> bool {
    true
}

impl CassetteBundle {
    pub fn new(scenario: impl Into<String>, bundle: impl Into<String>, action_text: bool, skill: &SkillSpec) -> Self {
        Self {
            scenario: scenario.into(),
            bundle: bundle.into(),
            action_text,
            reference_digests: reference_digests(skill),
            trials: Vec::new(),
        }
    }

    pub fn trial(&self, index: u32) -> Option<&TrialScript> {
        self.trials.iter().find(|t| t.trial == index)
    }

    pub fn from_json_str(source: &str) -> Result<Self, LlmError> {
        serde_json::from_str(source).map_err(|e| LlmError::Cassette(e.to_string()))
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("bundle serializes");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Cassette(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text).map_err(|e| LlmError::Cassette(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_json_string())
    }
}

/// Short hash of a normalized reference response.
pub fn reference_digest(reference: &str) -> String {
    let hash = Sha256::digest(normalize(reference).as_bytes());
    hex::encode(&hash[..8])
}

pub fn reference_digests(skill: &SkillSpec) -> BTreeMap<String, String> {
    skill
        .actions
        .iter()
        .map(|a| (a.name.clone(), reference_digest(&a.reference_response)))
        .collect()
}

//! Benchmark fixtures shared by the criterion suites.

use std::path::PathBuf;

use planact_core::llm::{CassetteBundle, ChatClient, ScriptedClient};
use planact_core::sim::{load_scenario, ScenarioScript};

pub const SCENARIOS: [&str; 4] = ["person-robot", "person-object", "person-environment", "person-person"];

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

/// The shipped scenarios paired with one bundle's cassettes.
pub struct Corpus {
    pub scripts: Vec<ScenarioScript>,
    pub bundles: Vec<CassetteBundle>,
}

impl Corpus {
    pub fn load(bundle: &str) -> Self {
        let data = data_dir();
        let scripts = SCENARIOS
            .iter()
            .map(|id| load_scenario(&data.join(format!("scenarios/{id}.toml"))).expect("shipped scenario"))
            .collect();
        let bundles = SCENARIOS
            .iter()
            .map(|id| CassetteBundle::load(&data.join(format!("bundles/{bundle}/{id}.json"))).expect("shipped bundle"))
            .collect();
        Self { scripts, bundles }
    }

    pub fn client(&self, scenario: &str, trial: u32) -> ScriptedClient {
        let bundle = self.bundles.iter().find(|b| b.scenario == scenario).expect("bundle per scenario");
        ScriptedClient::new(bundle.trial(trial).expect("trial recorded").entries.clone())
    }

    pub fn boxed_client(&self, scenario: &str, trial: u32) -> Box<dyn ChatClient> {
        Box::new(self.client(scenario, trial))
    }
}

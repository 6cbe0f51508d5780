//! Chat-completions client over HTTP.

use std::time::Duration;

use serde_json::{json, Value};

use super::client::ChatClient;
use super::prompt::Prompt;
use super::LlmError;

pub const ENV_BASE_URL: &str = "PLANACT_LLM_BASE_URL";
pub const ENV_MODEL: &str = "PLANACT_LLM_MODEL";
pub const ENV_API_KEY: &str = "PLANACT_LLM_API_KEY";
pub const ENV_TIMEOUT: &str = "PLANACT_LLM_TIMEOUT_S";

pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";
pub const DEFAULT_MODEL: &str = "gpt-4o-2024-08-06";

#[derive(Debug, Clone, PartialEq)]
pub struct LiveConfig {
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout_s: f64,
    pub temperature: f64,
    pub seed: Option<u64>,
}

impl Default for LiveConfig {
    fn default() -> Self {
        Self {
            base_url: DEFAULT_BASE_URL.into(),
            model: DEFAULT_MODEL.into(),
            api_key: None,
            timeout_s: 30.0,
            temperature: 0.0,
            seed: None,
        }
    }
}

impl LiveConfig {
    pub fn from_env() -> Result<Self, LlmError> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn from_lookup(lookup: impl Fn(&str) -> Option<String>) -> Result<Self, LlmError> {
        let mut config = Self::default();
        if let Some(url) = lookup(ENV_BASE_URL) {
            config.base_url = url;
        }
        if let Some(model) = lookup(ENV_MODEL) {
            config.model = model;
        }
        config.api_key = lookup(ENV_API_KEY).filter(|k| !k.is_empty());
        if let Some(t) = lookup(ENV_TIMEOUT) {
            config.timeout_s = t
                .parse::<f64>()
                .ok()
                .filter(|t| *t > 0.0)
                .ok_or_else(|| LlmError::Config(format!("{ENV_TIMEOUT}={t:?} is not a positive number")))?;
        }
        Ok(config)
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

pub struct HttpChatClient {
    config: LiveConfig,
    agent: ureq::Agent,
}

impl HttpChatClient {
    pub fn new(config: LiveConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_s)))
            .http_status_as_error(false)
            .build()
            .into();
        Self { config, agent }
    }

    pub fn request_body(&self, prompt: &Prompt) -> Value {
        let mut body = json!({
            "model": self.config.model,
            "messages": prompt.messages,
            "temperature": self.config.temperature,
        });
        if let Some(seed) = self.config.seed {
            body["seed"] = json!(seed);
        }
        body
    }
}

impl ChatClient for HttpChatClient {
    fn complete(&mut self, prompt: &Prompt) -> Result<String, LlmError> {
        let mut request = self.agent.post(self.config.endpoint());
        if let Some(key) = &self.config.api_key {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = request
            .send_json(self.request_body(prompt))
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let status = response.status();
        let body: Value = response
            .body_mut()
            .read_json()
            .map_err(|e| LlmError::Transport(format!("unreadable response body: {e}")))?;
        if !status.is_success() {
            let detail = body["error"]["message"].as_str().unwrap_or("no detail");
            let err = format!("HTTP {status}: {detail}");
            return Err(if status.is_server_error() || status.as_u16() == 429 {
                LlmError::Transport(err)
            } else {
                LlmError::Config(err)
            });
        }
        body["choices"][0]["message"]["content"]
            .as_str()
            .map(String::from)
            .ok_or_else(|| LlmError::Transport("response has no choices[0].message.content".into()))
    }
}

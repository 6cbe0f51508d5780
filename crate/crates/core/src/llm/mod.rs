//! Language-model gateway: prompt builders, reply parsers, and the
//! interchangeable clients (cassette replay, live HTTP, recording).

pub mod cassette;
pub mod client;
pub mod http;
pub mod parse;
pub mod prompt;

use log::warn;
use thiserror::Error;

pub use cassette::{CassetteBundle, CassetteEntry, TrialScript};
pub use client::{query, ChatClient, RecordingClient, ScriptedClient};
pub use http::{HttpChatClient, LiveConfig};
pub use parse::{
    parse_plan_response, parse_wait_time, parse_yes_no, LosePersonAnswer, PlanResponse, WaitTime,
    WaitTimeAnswer,
};
pub use prompt::{
    build_lose_person_question, build_stage1_messages, build_wait_time_question, ChatMessage,
    HumanSituation, Prompt, Role, RobotSituation, Stage,
};

/// Wait time used when the wait-time reply cannot be parsed.
pub const FALLBACK_WAIT_TIME_S: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("invalid prompt input: {0}")]
    InvalidInput(String),
    #[error("unparseable reply ({reason}): {raw:?}")]
    Parse { reason: String, raw: String },
    #[error("cassette desync at entry {index}: expected `{expected}`, got `{actual}`")]
    Desync {
        index: usize,
        expected: String,
        actual: String,
    },
    #[error("cassette exhausted after {index} entries; next prompt was `{actual}`")]
    Exhausted { index: usize, actual: String },
    #[error("transport: {0}")]
    Transport(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("cassette: {0}")]
    Cassette(String),
}

impl LlmError {
    pub(crate) fn parse(reason: impl Into<String>, raw: &str) -> Self {
        Self::Parse {
            reason: reason.into(),
            raw: raw.to_string(),
        }
    }
}

/// Answer to a second-stage question, with whether the fallback was used.
#[derive(Debug, Clone, PartialEq)]
pub struct Answered<T> {
    pub value: T,
    pub fallback: bool,
}

/// A client plus the log of every prompt it was sent.
pub struct Gateway<'a> {
    client: Box<dyn ChatClient + 'a>,
    issued: Vec<Prompt>,
}

impl<'a> Gateway<'a> {
    pub fn new(client: impl ChatClient + 'a) -> Self {
        Self::boxed(Box::new(client))
    }

    pub fn boxed(client: Box<dyn ChatClient + 'a>) -> Self {
        Self {
            client,
            issued: Vec::new(),
        }
    }

    pub fn issued(&self) -> &[Prompt] {
        &self.issued
    }

    pub fn into_issued(self) -> Vec<Prompt> {
        self.issued
    }

    pub fn ask(&mut self, prompt: Prompt) -> Result<String, LlmError> {
        let reply = query(self.client.as_mut(), &prompt);
        self.issued.push(prompt);
        reply
    }

    pub fn ask_wait_time(&mut self, activity: &str) -> Result<Answered<WaitTime>, LlmError> {
        let raw = self.ask(build_wait_time_question(activity)?)?;
        Ok(match parse_wait_time(&raw) {
            Ok(a) => Answered {
                value: a.wait_time,
                fallback: false,
            },
            Err(e) => {
                warn!("wait-time reply unusable, falling back to {FALLBACK_WAIT_TIME_S} s: {e}");
                Answered {
                    value: WaitTime::Seconds(FALLBACK_WAIT_TIME_S),
                    fallback: true,
                }
            }
        })
    }

    pub fn ask_lose_person(&mut self, activity: &str, horizon_s: f64) -> Result<Answered<bool>, LlmError> {
        let raw = self.ask(build_lose_person_question(activity, horizon_s)?)?;
        Ok(match parse_yes_no(&raw) {
            Ok(a) => Answered {
                value: a.answer,
                fallback: false,
            },
            Err(e) => {
                warn!("lose-person reply unusable, assuming no: {e}");
                Answered {
                    value: false,
                    fallback: true,
                }
            }
        })
    }

    /// Stage-1 call. A reply that does not parse is asked once more; a
    /// second failure yields `None` (keep the current action).
    pub fn ask_plan(
        &mut self,
        robot: &RobotSituation,
        human: &HumanSituation,
    ) -> Result<Option<PlanResponse>, LlmError> {
        human.validate()?;
        for attempt in 0..2 {
            let raw = self.ask(build_stage1_messages(robot, human))?;
            match parse_plan_response(&raw) {
                Ok(plan) => return Ok(Some(plan)),
                Err(e) => warn!("plan reply unusable (attempt {}): {e}", attempt + 1),
            }
        }
        Ok(None)
    }
}

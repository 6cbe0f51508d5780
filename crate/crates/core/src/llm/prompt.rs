//! Prompt assembly for the stage-1 plan call and the two second-stage
//! timing questions. Every builder is a pure function of its inputs: no
//! conversation history is carried between calls.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::LlmError;
use crate::skill::as_sentence;

const STAGE1_INSTRUCTION: &str = include_str!("../../prompts/stage1_instruction.txt");
const STAGE1_ACK: &str = include_str!("../../prompts/stage1_ack.txt");
const WAIT_TIME_QUESTION: &str = include_str!("../../prompts/wait_time_question.txt");
const LOSE_PERSON_QUESTION: &str = include_str!("../../prompts/lose_person_question.txt");

pub const GAZE_TOWARD: &str = "The person is looking at the robot.";
pub const GAZE_AWAY: &str = "The person is not looking at the robot.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

/// Which of the three prompts a call carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "1")]
    Plan,
    #[serde(rename = "2-wait")]
    WaitTime,
    #[serde(rename = "2-lose")]
    LosePerson,
}

impl Stage {
    pub fn marker(self) -> &'static str {
        match self {
            Self::Plan => "1",
            Self::WaitTime => "2-wait",
            Self::LosePerson => "2-lose",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.marker())
    }
}

/// A complete request: its stage and the ordered chat turns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub stage: Stage,
    pub messages: Vec<ChatMessage>,
}

impl Prompt {
    /// Content of the final user turn, which carries all call-specific text.
    pub fn situation(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .unwrap_or("")
    }

    /// Normalized key identifying this call in a cassette.
    pub fn digest(&self) -> String {
        situation_key(self.stage, self.situation())
    }
}

/// Lowercased, whitespace-collapsed `<stage> <situation>`.
pub fn situation_key(stage: Stage, situation: &str) -> String {
    normalize(&format!("{} {}", stage.marker(), situation))
}

pub fn normalize(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// What the perception side reports about the person.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanSituation {
    pub activity_text: String,
    pub gaze_text: String,
}

impl HumanSituation {
    /// Builds the situation from an activity phrase such as
    /// `talking on a phone`.
    pub fn from_activity(activity: &str, looking_at_robot: bool) -> Self {
        Self {
            activity_text: as_sentence(&format!("The person is {}", activity.trim())),
            gaze_text: if looking_at_robot { GAZE_TOWARD } else { GAZE_AWAY }.to_string(),
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.activity_text.trim().is_empty() {
            return Err(LlmError::InvalidInput("activity text is empty".into()));
        }
        if self.gaze_text != GAZE_TOWARD && self.gaze_text != GAZE_AWAY {
            return Err(LlmError::InvalidInput(format!(
                "gaze text {:?} is not a canonical gaze sentence",
                self.gaze_text
            )));
        }
        Ok(())
    }

    pub fn text(&self) -> String {
        join_sentences([self.activity_text.as_str(), self.gaze_text.as_str()])
    }
}

/// Goal sentence plus, unless ablated, the current action's text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RobotSituation {
    pub goal_text: String,
    pub action_text: Option<String>,
}

impl RobotSituation {
    pub fn text(&self) -> String {
        match &self.action_text {
            Some(action) => join_sentences([self.goal_text.as_str(), action.as_str()]),
            None => join_sentences([self.goal_text.as_str()]),
        }
    }
}

fn join_sentences<'a>(parts: impl IntoIterator<Item = &'a str>) -> String {
    parts
        .into_iter()
        .filter(|p| !p.trim().is_empty())
        .map(as_sentence)
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn stage1_user_turn(robot: &RobotSituation, human: &HumanSituation) -> String {
    format!("{} {}", robot.text(), human.text())
}

pub fn build_stage1_messages(robot: &RobotSituation, human: &HumanSituation) -> Prompt {
    Prompt {
        stage: Stage::Plan,
        messages: vec![
            ChatMessage::user(STAGE1_INSTRUCTION),
            ChatMessage::assistant(STAGE1_ACK),
            ChatMessage::user(stage1_user_turn(robot, human)),
        ],
    }
}

pub fn build_wait_time_question(activity: &str) -> Result<Prompt, LlmError> {
    if activity.trim().is_empty() {
        return Err(LlmError::InvalidInput("wait-time question needs an activity".into()));
    }
    Ok(Prompt {
        stage: Stage::WaitTime,
        messages: vec![ChatMessage::user(WAIT_TIME_QUESTION.replace("{X_a}", activity))],
    })
}

pub fn build_lose_person_question(activity: &str, horizon_s: f64) -> Result<Prompt, LlmError> {
    if !(horizon_s > 0.0 && horizon_s.is_finite()) {
        return Err(LlmError::InvalidInput(format!(
            "lose-person horizon must be positive, got {horizon_s}"
        )));
    }
    let text = LOSE_PERSON_QUESTION
        .replace("{X_a}", activity)
        .replace("{T}", &format!("{horizon_s:.1}"));
    Ok(Prompt {
        stage: Stage::LosePerson,
        messages: vec![ChatMessage::user(text)],
    })
}

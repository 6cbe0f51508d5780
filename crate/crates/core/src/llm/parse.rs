//! Parsing of dictionary-shaped model replies. Models wrap the dictionary in
//! prose or code fences; the first region that parses as an object wins.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::LlmError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanResponse {
    pub action_raw: String,
    pub reason: String,
    /// Phrase the robot should say, when the action quotes one.
    pub speech_content: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum WaitTime {
    Seconds(f64),
    Infinite,
}

impl WaitTime {
    pub fn seconds(self) -> Option<f64> {
        match self {
            Self::Seconds(s) => Some(s),
            Self::Infinite => None,
        }
    }
}

impl fmt::Display for WaitTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Seconds(s) => write!(f, "{s:.1}"),
            Self::Infinite => f.write_str("inf"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaitTimeAnswer {
    pub wait_time: WaitTime,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LosePersonAnswer {
    pub answer: bool,
    pub reason: String,
}

/// Locates the first `{...}` region of `raw` that parses as a JSON object.
pub fn extract_dictionary(raw: &str) -> Option<Map<String, Value>> {
    let bytes = raw.as_bytes();
    for (start, _) in raw.char_indices().filter(|&(_, c)| c == '{') {
        let Some(end) = matching_brace(bytes, start) else {
            continue;
        };
        let region = &raw[start..=end];
        if let Ok(Value::Object(map)) = serde_json::from_str(region) {
            return Some(map);
        }
        // Python-style dictionaries: only attempt when no double quotes exist.
        if !region.contains('"') {
            if let Ok(Value::Object(map)) = serde_json::from_str(&region.replace('\'', "\"")) {
                return Some(map);
            }
        }
    }
    None
}

fn matching_brace(bytes: &[u8], start: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_string {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

fn dictionary(raw: &str) -> Result<Map<String, Value>, LlmError> {
    extract_dictionary(raw).ok_or_else(|| LlmError::parse("no dictionary found", raw))
}

fn text_field(map: &Map<String, Value>, key: &str) -> Option<String> {
    match map.get(key)? {
        Value::String(s) => Some(s.clone()),
        Value::Null => None,
        other => Some(other.to_string()),
    }
}

pub fn parse_plan_response(raw: &str) -> Result<PlanResponse, LlmError> {
    let map = dictionary(raw)?;
    let action_raw = text_field(&map, "action")
        .filter(|a| !a.trim().is_empty())
        .ok_or_else(|| LlmError::parse("missing key \"action\"", raw))?;
    let reason = text_field(&map, "reason").ok_or_else(|| LlmError::parse("missing key \"reason\"", raw))?;
    let speech_content = longest_quoted_span(&action_raw);
    Ok(PlanResponse {
        action_raw,
        reason,
        speech_content,
    })
}

/// Longest span enclosed in straight or curly double quotes.
pub fn longest_quoted_span(text: &str) -> Option<String> {
    quoted_spans(text)
        .into_iter()
        .map(|(s, e)| text[s..e].trim())
        .filter(|s| !s.is_empty())
        .max_by_key(|s| s.chars().count())
        .map(String::from)
}

/// Byte ranges of the contents of each quoted span.
pub(crate) fn quoted_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, char)> = None;
    for (i, c) in text.char_indices() {
        match (open, c) {
            (None, '"') => open = Some((i + 1, '"')),
            (None, '\u{201C}') => open = Some((i + c.len_utf8(), '\u{201D}')),
            (Some((s, close)), c) if c == close => {
                spans.push((s, i));
                open = None;
            }
            _ => {}
        }
    }
    spans
}

pub fn parse_wait_time(raw: &str) -> Result<WaitTimeAnswer, LlmError> {
    let map = dictionary(raw)?;
    let value = map
        .get("wait_time")
        .ok_or_else(|| LlmError::parse("missing key \"wait_time\"", raw))?;
    let wait_time = match value {
        Value::Number(n) => n.as_f64().map(WaitTime::Seconds),
        Value::String(s) => {
            let s = s.trim().trim_end_matches(['s', ' ']);
            match s.to_ascii_lowercase().as_str() {
                "inf" | "infinite" | "infinity" => Some(WaitTime::Infinite),
                other => other.parse::<f64>().ok().map(WaitTime::Seconds),
            }
        }
        _ => None,
    }
    .filter(|w| !matches!(w, WaitTime::Seconds(s) if !s.is_finite() || *s < 0.0))
    .ok_or_else(|| LlmError::parse(format!("unparseable wait_time {value}"), raw))?;
    Ok(WaitTimeAnswer {
        wait_time,
        reason: text_field(&map, "reason").unwrap_or_default(),
    })
}

pub fn parse_yes_no(raw: &str) -> Result<LosePersonAnswer, LlmError> {
    let map = dictionary(raw)?;
    let value = map
        .get("answer")
        .ok_or_else(|| LlmError::parse("missing key \"answer\"", raw))?;
    let answer = match value {
        Value::Bool(b) => Some(*b),
        Value::String(s) => match s.trim().trim_end_matches(['.', '!']).to_ascii_lowercase().as_str() {
            "yes" => Some(true),
            "no" => Some(false),
            _ => None,
        },
        _ => None,
    }
    .ok_or_else(|| LlmError::parse(format!("answer {value} is not yes or no"), raw))?;
    Ok(LosePersonAnswer {
        answer,
        reason: text_field(&map, "reason").unwrap_or_default(),
    })
}

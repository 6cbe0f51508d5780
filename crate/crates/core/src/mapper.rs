//! Maps free-text planner output onto registered actions by similarity to
//! each action's reference response, and drafts new actions for clauses
//! that match nothing.
//!
//! Scoring is cosine similarity over token multisets. Tokens are lowercased,
//! stripped of punctuation and quoted speech, filtered against a stopword
//! list, stemmed by a small suffix stripper, and folded into a handful of
//! concept tokens (`stop` and `pause` score as the same behavior).

use std::collections::{BTreeMap, HashSet};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::llm::parse::quoted_spans;
use crate::llm::PlanResponse;
use crate::skill::{ActionSpec, StimuliKind};

pub const DEFAULT_THRESHOLD: f64 = 0.35;

const CLAUSE_PREFIX: &str = "The robot should";

const STOPWORDS: &[&str] = &[
    "a", "an", "the", "robot", "robots", "should", "its", "it", "to", "of", "and", "or", "with",
    "if", "would", "is", "are", "be", "been", "in", "into", "on", "at", "for", "from", "by", "as",
    "that", "this", "then", "their", "his", "her", "them", "they", "he", "she", "you", "your", "so",
    "can", "could", "may", "might", "will", "just", "some", "any", "also", "while", "s",
];

/// Verbs that open a new behavior after a bare `and` / `then`.
const CLAUSE_VERBS: &[&str] = &[
    "wait", "make", "pause", "stop", "approach", "move", "turn", "respond", "greet", "say",
    "speak", "nod", "look", "continue", "resume", "announce", "smile", "wave", "step", "keep",
    "remain", "stay", "try", "observe", "offer", "maintain", "acknowledge",
];

const LIGHT_VERBS: &[&str] = &["make", "do", "perform", "give", "take", "have", "get"];

/// Stems folded into one concept token each.
const CONCEPTS: &[(&str, &[&str])] = &[
    ("#pause", &["paus", "stop", "halt", "freez"]),
    ("#speak", &["speak", "say", "respond", "announc", "greet", "ask", "talk", "phras"]),
    ("#move", &["mov", "approach", "advanc", "proceed"]),
    ("#wait", &["wait", "hold"]),
];

const SHORT_VERBS: &[&str] = &["make", "turn", "pause", "stop", "nod", "point"];
const LONG_VERBS: &[&str] = &["approach", "follow", "move", "escort"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntentClause {
    pub text: String,
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MappingOutcome {
    pub matches: Vec<(String, f64)>,
    pub unmapped: Vec<IntentClause>,
}

impl MappingOutcome {
    pub fn action_names(&self) -> Vec<String> {
        self.matches.iter().map(|(n, _)| n.clone()).collect()
    }
}

/// Splits a planner action into one clause per robot behavior.
pub fn split_into_intents(action_raw: &str) -> Vec<IntentClause> {
    let body = strip_prefix_ci(action_raw.trim(), CLAUSE_PREFIX).unwrap_or(action_raw.trim());
    let body = body.trim().trim_end_matches(['.', '!']);

    let mut pieces = Vec::new();
    for piece in split_outside_quotes(body, |c| c == ',' || c == ';') {
        pieces.extend(split_on_conjunction(piece));
    }
    pieces
        .into_iter()
        .map(|p| strip_leading_connectives(p.trim()))
        .filter(|p| !p.is_empty())
        .enumerate()
        .map(|(position, p)| IntentClause {
            text: format!("{CLAUSE_PREFIX} {}.", p.trim_end_matches(['.', '!'])),
            position,
        })
        .collect()
}

fn strip_prefix_ci<'a>(text: &'a str, prefix: &str) -> Option<&'a str> {
    let head = text.get(..prefix.len())?;
    head.eq_ignore_ascii_case(prefix).then(|| &text[prefix.len()..])
}

fn strip_leading_connectives(mut piece: &str) -> &str {
    loop {
        let lower = piece.to_ascii_lowercase();
        let cut = ["and then ", "and ", "then ", "also "]
            .iter()
            .find(|c| lower.starts_with(*c))
            .map(|c| c.len());
        match cut {
            Some(n) => piece = piece[n..].trim_start(),
            None => return piece,
        }
    }
}

fn split_outside_quotes(text: &str, is_sep: impl Fn(char) -> bool) -> Vec<&str> {
    let quoted = quoted_spans(text);
    let inside = |i: usize| quoted.iter().any(|&(s, e)| i >= s && i < e);
    let mut out = Vec::new();
    let mut start = 0;
    for (i, c) in text.char_indices() {
        if is_sep(c) && !inside(i) {
            out.push(&text[start..i]);
            start = i + c.len_utf8();
        }
    }
    out.push(&text[start..]);
    out
}

/// Splits at ` and ` / ` then ` when the next non-adverb word is a behavior
/// verb; other conjunctions stay inside the clause.
fn split_on_conjunction(piece: &str) -> Vec<&str> {
    let quoted = quoted_spans(piece);
    let lower = piece.to_ascii_lowercase();
    let mut cuts = Vec::new();
    for conj in [" and ", " then "] {
        let mut from = 0;
        while let Some(off) = lower[from..].find(conj) {
            let at = from + off;
            from = at + conj.len();
            if quoted.iter().any(|&(s, e)| at >= s && at < e) {
                continue;
            }
            let next_verb = lower[from..]
                .split_whitespace()
                .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()))
                .find(|w| !(w.ends_with("ly") || *w == "then"));
            if next_verb.is_some_and(|w| CLAUSE_VERBS.contains(&w)) {
                cuts.push((at, conj.len()));
            }
        }
    }
    cuts.sort_unstable();
    let mut out = Vec::new();
    let mut start = 0;
    for (at, len) in cuts {
        if at >= start {
            out.push(&piece[start..at]);
            start = at + len;
        }
    }
    out.push(&piece[start..]);
    out
}

fn without_quotes(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for (s, e) in quoted_spans(text) {
        // Drop the opening quote too; the closing one is punctuation anyway.
        let open = text[..s].char_indices().last().map(|(i, _)| i).unwrap_or(s);
        out.push_str(&text[last..open]);
        last = e;
    }
    out.push_str(&text[last..]);
    out
}

/// Minimal suffix stripper: `ing`, `ed`, `s`, then a trailing `e`.
pub fn stem(word: &str) -> String {
    let mut w = word;
    for suffix in ["ing", "ed"] {
        if let Some(base) = w.strip_suffix(suffix) {
            if base.len() >= 3 {
                w = base;
                break;
            }
        }
    }
    if w.len() == word.len() && !w.ends_with("ss") {
        if let Some(base) = w.strip_suffix('s') {
            if base.len() >= 3 {
                w = base;
            }
        }
    }
    if let Some(base) = w.strip_suffix('e') {
        if base.len() >= 3 {
            w = base;
        }
    }
    w.to_string()
}

fn concept(stemmed: String) -> String {
    CONCEPTS
        .iter()
        .find(|(_, members)| members.contains(&stemmed.as_str()))
        .map(|(c, _)| c.to_string())
        .unwrap_or(stemmed)
}

/// Normalized scoring tokens of `text`.
pub fn tokens(text: &str) -> Vec<String> {
    without_quotes(text)
        .to_lowercase()
        .replace(['\'', '\u{2019}'], "")
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty() && !STOPWORDS.contains(w))
        .map(|w| concept(stem(w)))
        .collect()
}

fn counts(tokens: Vec<String>) -> BTreeMap<String, f64> {
    let mut map = BTreeMap::new();
    for t in tokens {
        *map.entry(t).or_insert(0.0) += 1.0;
    }
    map
}

/// Cosine similarity of the two texts' token multisets, in `[0, 1]`.
pub fn similarity(a: &str, b: &str) -> f64 {
    let (va, vb) = (counts(tokens(a)), counts(tokens(b)));
    let dot: f64 = va.iter().filter_map(|(t, x)| vb.get(t).map(|y| x * y)).sum();
    let norm = |v: &BTreeMap<String, f64>| v.values().map(|x| x * x).sum::<f64>().sqrt();
    let denom = norm(&va) * norm(&vb);
    if denom == 0.0 || dot == 0.0 {
        0.0
    } else {
        (dot / denom).clamp(0.0, 1.0)
    }
}

/// Best-scoring action for one clause; ties go to the earlier action.
pub fn best_match<'a>(clause: &str, actions: &'a [ActionSpec]) -> Option<(&'a ActionSpec, f64)> {
    let mut best: Option<(&ActionSpec, f64)> = None;
    for action in actions {
        let score = similarity(clause, &action.reference_response);
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((action, score));
        }
    }
    best
}

pub fn map_plan(plan: &PlanResponse, actions: &[ActionSpec], threshold: f64) -> MappingOutcome {
    debug_assert!(threshold > 0.0 && threshold < 1.0);
    let mut matches: Vec<(String, f64)> = Vec::new();
    let mut unmapped = Vec::new();
    for clause in split_into_intents(&plan.action_raw) {
        match best_match(&clause.text, actions) {
            Some((action, score)) if score >= threshold => match matches.last_mut() {
                Some((last, s)) if *last == action.name => *s = s.max(score),
                _ => matches.push((action.name.clone(), score)),
            },
            _ => unmapped.push(clause),
        }
    }
    MappingOutcome { matches, unmapped }
}

/// Heuristic stimuli category for a response clause; `None` when the
/// clause needs an explicit assignment.
pub fn classify_response(clause: &str) -> Option<StimuliKind> {
    let body = without_quotes(clause).to_lowercase();
    let body = body.trim();
    let body = body.strip_prefix("the robot should").unwrap_or(body);
    let words: Vec<&str> = body
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .collect();
    if words.iter().any(|w| *w == "until" || *w == "wait") {
        let gaze = body.contains("eye contact")
            || words.iter().any(|w| w.starts_with("look") || w.starts_with("gaz") || w.starts_with("glanc"));
        return Some(if gaze {
            StimuliKind::Type1Gaze
        } else {
            StimuliKind::Type1Activity
        });
    }
    let verb = words.iter().find(|w| !w.ends_with("ly"))?;
    if SHORT_VERBS.contains(verb) {
        Some(StimuliKind::Type2A)
    } else if LONG_VERBS.contains(verb) {
        Some(StimuliKind::Type2B)
    } else {
        None
    }
}

/// Proposed new action built from an unmapped clause. Drafts are never
/// activated automatically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionDraft {
    pub name: String,
    pub reference_response: String,
    /// `None` until someone assigns a category.
    pub stimuli: Option<StimuliKind>,
}

pub fn propose_registration(clause: &IntentClause, category: Option<StimuliKind>) -> ActionDraft {
    ActionDraft {
        name: draft_name(&clause.text),
        reference_response: clause.text.clone(),
        stimuli: category.or_else(|| classify_response(&clause.text)),
    }
}

fn draft_name(clause: &str) -> String {
    let body = without_quotes(clause).to_lowercase().replace(['\'', '\u{2019}'], "");
    let words: Vec<&str> = body
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty() && !STOPWORDS.contains(w))
        .filter(|w| !w.ends_with("ly") && !LIGHT_VERBS.contains(w))
        .take(3)
        .collect();
    if words.is_empty() {
        "action".into()
    } else {
        words.join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationRecord {
    pub timestamp: f64,
    pub clause: String,
    pub proposed_name: String,
    pub category: String,
}

/// Append-only log of proposed actions, deduplicated by normalized clause.
#[derive(Debug, Default)]
pub struct RegistrationLedger {
    path: Option<PathBuf>,
    seen: HashSet<String>,
    records: Vec<RegistrationRecord>,
}

impl RegistrationLedger {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or creates) a JSON-lines ledger, loading existing records.
    pub fn open(path: &Path) -> std::io::Result<Self> {
        let mut ledger = Self {
            path: Some(path.to_path_buf()),
            ..Self::default()
        };
        if path.exists() {
            for line in std::fs::read_to_string(path)?.lines().filter(|l| !l.trim().is_empty()) {
                let record: RegistrationRecord = serde_json::from_str(line)
                    .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
                ledger.seen.insert(crate::llm::prompt::normalize(&record.clause));
                ledger.records.push(record);
            }
        }
        Ok(ledger)
    }

    pub fn records(&self) -> &[RegistrationRecord] {
        &self.records
    }

    /// Returns `false` when an equivalent clause was already recorded.
    pub fn record(&mut self, draft: &ActionDraft, timestamp: f64) -> std::io::Result<bool> {
        if !self.seen.insert(crate::llm::prompt::normalize(&draft.reference_response)) {
            return Ok(false);
        }
        let record = RegistrationRecord {
            timestamp,
            clause: draft.reference_response.clone(),
            proposed_name: draft.name.clone(),
            category: draft
                .stimuli
                .map_or_else(|| "unclassified".to_string(), |k| k.as_str().to_string()),
        };
        if let Some(path) = &self.path {
            let mut file = OpenOptions::new().create(true).append(true).open(path)?;
            writeln!(file, "{}", serde_json::to_string(&record).expect("record serializes"))?;
        }
        self.records.push(record);
        Ok(true)
    }
}

use std::collections::VecDeque;

use log::warn;

use super::cassette::CassetteEntry;
use super::prompt::{normalize, Prompt};
use super::LlmError;

/// Anything that can answer a prompt with raw model text.
pub trait ChatClient: Send {
    fn complete(&mut self, prompt: &Prompt) -> Result<String, LlmError>;
}

impl<C: ChatClient + ?Sized> ChatClient for Box<C> {
    fn complete(&mut self, prompt: &Prompt) -> Result<String, LlmError> {
        (**self).complete(prompt)
    }
}

impl<C: ChatClient + ?Sized> ChatClient for &mut C {
    fn complete(&mut self, prompt: &Prompt) -> Result<String, LlmError> {
        (**self).complete(prompt)
    }
}

/// Sends one prompt, retrying once on transport failure.
pub fn query(client: &mut dyn ChatClient, prompt: &Prompt) -> Result<String, LlmError> {
    match client.complete(prompt) {
        Err(LlmError::Transport(first)) => {
            warn!("transport failure, retrying once: {first}");
            client.complete(prompt)
        }
        other => other,
    }
}

/// Replays a cassette trial in order, checking each prompt's digest.
#[derive(Debug, Clone)]
pub struct ScriptedClient {
    entries: VecDeque<CassetteEntry>,
    consumed: usize,
}

impl ScriptedClient {
    pub fn new(entries: impl IntoIterator<Item = CassetteEntry>) -> Self {
        Self {
            entries: entries.into_iter().collect(),
            consumed: 0,
        }
    }

    pub fn consumed(&self) -> usize {
        self.consumed
    }

    pub fn remaining(&self) -> usize {
        self.entries.len()
    }
}

impl ChatClient for ScriptedClient {
    fn complete(&mut self, prompt: &Prompt) -> Result<String, LlmError> {
        let actual = prompt.digest();
        let Some(entry) = self.entries.front() else {
            return Err(LlmError::Exhausted {
                index: self.consumed,
                actual,
            });
        };
        let expected = normalize(&entry.key);
        if entry.stage != prompt.stage || expected != actual {
            return Err(LlmError::Desync {
                index: self.consumed,
                expected,
                actual,
            });
        }
        let entry = self.entries.pop_front().expect("front checked");
        self.consumed += 1;
        Ok(entry.response)
    }
}

/// Forwards to an inner client and keeps a cassette entry per answered call.
pub struct RecordingClient<C> {
    inner: C,
    recorded: Vec<CassetteEntry>,
}

impl<C: ChatClient> RecordingClient<C> {
    pub fn new(inner: C) -> Self {
        Self {
            inner,
            recorded: Vec::new(),
        }
    }

    pub fn recorded(&self) -> &[CassetteEntry] {
        &self.recorded
    }

    pub fn into_recorded(self) -> Vec<CassetteEntry> {
        self.recorded
    }
}

impl<C: ChatClient> ChatClient for RecordingClient<C> {
    fn complete(&mut self, prompt: &Prompt) -> Result<String, LlmError> {
        let response = self.inner.complete(prompt)?;
        self.recorded.push(CassetteEntry {
            stage: prompt.stage,
            key: prompt.digest(),
            response: response.clone(),
        });
        Ok(response)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::prompt::{build_wait_time_question, Stage};

    struct Canned(&'static str);

    impl ChatClient for Canned {
        fn complete(&mut self, _: &Prompt) -> Result<String, LlmError> {
            Ok(self.0.to_string())
        }
    }

    struct Flaky {
        failures: usize,
        calls: usize,
    }

    impl ChatClient for Flaky {
        fn complete(&mut self, _: &Prompt) -> Result<String, LlmError> {
            self.calls += 1;
            if self.calls <= self.failures {
                Err(LlmError::Transport("connection reset".into()))
            } else {
                Ok("{}".into())
            }
        }
    }

    fn entry(prompt: &Prompt, response: &str) -> CassetteEntry {
        CassetteEntry {
            stage: prompt.stage,
            key: prompt.digest(),
            response: response.into(),
        }
    }

    #[test]
    fn scripted_replays_verbatim() {
        let p = build_wait_time_question("reading a book").unwrap();
        let mut client = ScriptedClient::new([entry(&p, "{\"wait_time\": 2.0}")]);
        assert_eq!(query(&mut client, &p).unwrap(), "{\"wait_time\": 2.0}");
        assert_eq!(client.remaining(), 0);
    }

    #[test]
    fn scripted_key_tolerates_whitespace_and_case() {
        let p = build_wait_time_question("reading a book").unwrap();
        let mut e = entry(&p, "r");
        e.key = format!("  {}  ", e.key.to_uppercase().replace(' ', "   "));
        let mut client = ScriptedClient::new([e]);
        assert!(client.complete(&p).is_ok());
    }

    #[test]
    fn scripted_mismatch_is_desync() {
        let recorded = build_wait_time_question("reading a book").unwrap();
        let asked = build_wait_time_question("walking by").unwrap();
        let mut client = ScriptedClient::new([entry(&recorded, "r")]);
        match client.complete(&asked) {
            Err(LlmError::Desync { expected, actual, index }) => {
                assert_eq!(index, 0);
                assert!(expected.contains("reading a book"));
                assert!(actual.contains("walking by"));
            }
            other => panic!("expected desync, got {other:?}"),
        }
        // Desync does not advance the cursor.
        assert_eq!(client.remaining(), 1);
    }

    #[test]
    fn scripted_stage_mismatch_is_desync() {
        let p = build_wait_time_question("reading a book").unwrap();
        let mut e = entry(&p, "r");
        e.stage = Stage::LosePerson;
        assert!(matches!(
            ScriptedClient::new([e]).complete(&p),
            Err(LlmError::Desync { .. })
        ));
    }

    #[test]
    fn exhausted_cassette() {
        let p = build_wait_time_question("reading a book").unwrap();
        assert!(matches!(
            ScriptedClient::new([]).complete(&p),
            Err(LlmError::Exhausted { .. })
        ));
    }

    #[test]
    fn recorder_grows_one_entry_per_call() {
        let mut rec = RecordingClient::new(Canned("{\"answer\": \"no\"}"));
        for (i, activity) in ["a", "b", "c"].iter().enumerate() {
            let p = build_wait_time_question(activity).unwrap();
            rec.complete(&p).unwrap();
            assert_eq!(rec.recorded().len(), i + 1);
        }
        // What was recorded replays cleanly.
        let mut replay = ScriptedClient::new(rec.into_recorded());
        for activity in ["a", "b", "c"] {
            let p = build_wait_time_question(activity).unwrap();
            assert_eq!(replay.complete(&p).unwrap(), "{\"answer\": \"no\"}");
        }
    }

    #[test]
    fn transport_failure_retried_once() {
        let p = build_wait_time_question("a").unwrap();
        let mut once = Flaky { failures: 1, calls: 0 };
        assert!(query(&mut once, &p).is_ok());
        let mut twice = Flaky { failures: 2, calls: 0 };
        assert!(matches!(query(&mut twice, &p), Err(LlmError::Transport(_))));
        assert_eq!(twice.calls, 2);
    }
}

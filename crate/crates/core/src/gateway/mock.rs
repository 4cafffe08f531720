use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use super::{estimate_tokens, Backend, BackendError, CacheKey, CompletionRequest, GatewayError};

/// One scripted response. An entry matches by exact request digest or by
/// prompt substring; an empty substring matches everything.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub digest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    pub response: String,
}

impl MockEntry {
    pub fn digest(digest: impl Into<String>, response: impl Into<String>) -> Self {
        Self {
            digest: Some(digest.into()),
            contains: None,
            response: response.into(),
        }
    }

    pub fn contains(needle: impl Into<String>, response: impl Into<String>) -> Self {
        Self {
            digest: None,
            contains: Some(needle.into()),
            response: response.into(),
        }
    }

    fn matches(&self, prompt: &str, key: &CacheKey) -> bool {
        if let Some(d) = &self.digest {
            return d == key.as_str();
        }
        match &self.contains {
            Some(needle) => prompt.contains(needle.as_str()),
            None => false,
        }
    }
}

/// Ordered entries; the first match wins. Stored on disk as a JSON array.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MockScript {
    pub entries: Vec<MockEntry>,
}

impl MockScript {
    pub fn new(entries: Vec<MockEntry>) -> Self {
        Self { entries }
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))
    }

    pub fn lookup(&self, prompt: &str, key: &CacheKey) -> Option<&str> {
        self.entries
            .iter()
            .find(|e| e.matches(prompt, key))
            .map(|e| e.response.as_str())
    }
}

/// Answers from a script, shaped like a chat-completions body.
pub struct MockBackend {
    script: MockScript,
    calls: AtomicUsize,
}

impl MockBackend {
    pub fn new(script: MockScript) -> Self {
        Self {
            script,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Backend for MockBackend {
    fn send(&self, req: &CompletionRequest, key: &CacheKey) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let text = self.script.lookup(&req.prompt, key).ok_or_else(|| BackendError::Fatal {
            status: 404,
            body: format!("no mock entry matches request {key}"),
        })?;
        Ok(serde_json::json!({
            "object": "chat.completion",
            "model": req.profile.model_name,
            "choices": [{
                "index": 0,
                "message": {"role": "assistant", "content": text},
                "finish_reason": "stop"
            }],
            "usage": {
                "prompt_tokens": estimate_tokens(&req.prompt),
                "completion_tokens": estimate_tokens(text)
            }
        })
        .to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::ModelProfile;

    #[test]
    fn first_match_wins() {
        let script = MockScript::new(vec![
            MockEntry::contains("cipher", "one"),
            MockEntry::contains("", "fallback"),
        ]);
        let key = CompletionRequest::new(&ModelProfile::mock("m"), "x").key();
        assert_eq!(script.lookup("a cipher task", &key), Some("one"));
        assert_eq!(script.lookup("other", &key), Some("fallback"));
    }

    #[test]
    fn digest_entry_beats_later_substring() {
        let req = CompletionRequest::new(&ModelProfile::mock("m"), "hello");
        let script = MockScript::new(vec![
            MockEntry::digest(req.key().as_str(), "by digest"),
            MockEntry::contains("hello", "by substring"),
        ]);
        assert_eq!(script.lookup("hello", &req.key()), Some("by digest"));
    }

    #[test]
    fn unmatched_request_is_fatal() {
        let backend = MockBackend::new(MockScript::default());
        let req = CompletionRequest::new(&ModelProfile::mock("m"), "x");
        assert!(matches!(
            backend.send(&req, &req.key()),
            Err(BackendError::Fatal { status: 404, .. })
        ));
    }

    #[test]
    fn script_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("script.json");
        std::fs::write(
            &path,
            r#"[{"contains": "fkrrvhg", "response": "<final_answer>choosed</final_answer>"}, {"digest": "ab", "response": "x"}]"#,
        )
        .unwrap();
        let s = MockScript::load(&path).unwrap();
        assert_eq!(s.entries.len(), 2);
        assert_eq!(s.entries[0].contains.as_deref(), Some("fkrrvhg"));
    }
}

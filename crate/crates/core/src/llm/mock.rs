//! Scripted transport for tests and offline runs.
//!
//! A script is a JSON array (or JSONL file) of entries consumed in order:
//!
//! ```json
//! [{"content": "TRUE"},
//!  {"status": 429, "body": "slow down"},
//!  {"timeout": true},
//!  {"content": "1. PhyML\n2. RAxML", "usage": {"prompt_tokens": 900, "completion_tokens": 8}}]
//! ```
//!
//! `content` builds a well-formed 200 chat response; `body` is sent verbatim
//! with `status` (default 200). Once the script runs dry every request gets
//! a 400 so a short script fails loudly instead of retrying.

use std::collections::VecDeque;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::transport::{Transport, TransportFailure, WireResponse};
use super::{ChatRequest, LlmError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<u16>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<ScriptUsage>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub timeout: bool,
}

impl ScriptEntry {
    pub fn reply(content: impl Into<String>) -> Self {
        ScriptEntry {
            content: Some(content.into()),
            ..Default::default()
        }
    }

    pub fn status(status: u16) -> Self {
        ScriptEntry {
            status: Some(status),
            body: Some(format!("{{\"error\":\"status {status}\"}}")),
            ..Default::default()
        }
    }

    pub fn timeout() -> Self {
        ScriptEntry {
            timeout: true,
            ..Default::default()
        }
    }

    fn to_wire(&self) -> Result<WireResponse, TransportFailure> {
        if self.timeout {
            return Err(TransportFailure::Timeout);
        }
        let status = self.status.unwrap_or(200);
        let body = match (&self.body, &self.content) {
            (Some(b), _) => b.clone(),
            (None, Some(c)) => {
                let mut v = json!({
                    "choices": [{"index": 0, "message": {"role": "assistant", "content": c}}]
                });
                if let Some(u) = self.usage {
                    v["usage"] = json!({
                        "prompt_tokens": u.prompt_tokens,
                        "completion_tokens": u.completion_tokens
                    });
                }
                v.to_string()
            }
            (None, None) => String::new(),
        };
        Ok(WireResponse { status, body })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MockScript(pub Vec<ScriptEntry>);

impl MockScript {
    pub fn replies<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        MockScript(replies.into_iter().map(ScriptEntry::reply).collect())
    }

    /// Reads a JSON array, or one entry per line.
    pub fn from_file(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Config(format!("{}: {e}", path.display())))?;
        if text.trim_start().starts_with('[') {
            return serde_json::from_str(&text)
                .map_err(|e| LlmError::Config(format!("{}: {e}", path.display())));
        }
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            entries.push(
                serde_json::from_str(line)
                    .map_err(|e| LlmError::Config(format!("{}:{}: {e}", path.display(), i + 1)))?,
            );
        }
        Ok(MockScript(entries))
    }
}

#[derive(Debug, Default)]
pub struct MockTransport {
    script: Mutex<VecDeque<ScriptEntry>>,
    requests: Mutex<Vec<ChatRequest>>,
}

impl MockTransport {
    pub fn new(script: MockScript) -> Self {
        MockTransport {
            script: Mutex::new(script.0.into()),
            requests: Mutex::new(Vec::new()),
        }
    }

    /// Every request received so far, in order.
    pub fn requests(&self) -> Vec<ChatRequest> {
        self.requests.lock().unwrap().clone()
    }

    pub fn remaining(&self) -> usize {
        self.script.lock().unwrap().len()
    }
}

impl Transport for MockTransport {
    fn send(&self, request: &ChatRequest, _timeout: Duration) -> Result<WireResponse, TransportFailure> {
        self.requests.lock().unwrap().push(request.clone());
        match self.script.lock().unwrap().pop_front() {
            Some(entry) => entry.to_wire(),
            None => Ok(WireResponse {
                status: 400,
                body: "mock script exhausted".into(),
            }),
        }
    }
}

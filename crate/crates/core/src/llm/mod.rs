//! Chat-completions client.
//!
//! Requests use the common hosted-model wire shape:
//!
//! ```json
//! {"model":"…","messages":[{"role":"user","content":"…"}],"temperature":0.0,"max_tokens":512}
//! ```
//!
//! and responses are read from `choices[0].message.content` with usage taken
//! from `usage.prompt_tokens` / `usage.completion_tokens`. When the endpoint
//! omits usage the client falls back to its token counter.

mod client;
mod clock;
mod mock;
mod ratelimit;
mod tokens;
mod transport;

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::corpus::Turn;

pub use client::{ChatClient, ClientConfig, RetryPolicy};
pub use clock::{Clock, MockClock, SystemClock};
pub use mock::{MockScript, MockTransport, ScriptEntry};
pub use ratelimit::{RateLimit, RateLimiter};
pub use tokens::{
    count_tokens, BpeTokenizer, CharHeuristic, TokenCounter, TokenizerError, DEFAULT_SPLIT_PATTERN,
};
pub use transport::{HttpTransport, Transport, TransportFailure, WireResponse};

pub const ENV_ENDPOINT: &str = "CITEFN_ENDPOINT";
pub const ENV_API_KEY: &str = "CITEFN_API_KEY";
pub const ENV_RPM: &str = "CITEFN_RPM";
pub const ENV_MODEL: &str = "CITEFN_MODEL";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub model_name: String,
    #[serde(default)]
    pub sampling_enabled: bool,
    pub max_output_tokens: u32,
    #[serde(with = "duration_secs")]
    pub request_timeout: Duration,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            model_name: "llama-3.1-405b-instruct".into(),
            sampling_enabled: false,
            max_output_tokens: 1024,
            request_timeout: Duration::from_secs(600),
        }
    }
}

impl GenerationConfig {
    /// Pipeline runs must be deterministic.
    pub fn check_deterministic(&self) -> Result<(), LlmError> {
        if self.sampling_enabled {
            Err(LlmError::Config(
                "sampling must be disabled for pipeline runs".into(),
            ))
        } else {
            Ok(())
        }
    }

    /// Sampling disabled maps to temperature 0 (greedy decoding).
    pub fn temperature(&self) -> f32 {
        if self.sampling_enabled {
            1.0
        } else {
            0.0
        }
    }
}

mod duration_secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        Duration::try_from_secs_f64(secs).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<Turn>,
    pub temperature: f32,
    pub max_tokens: u32,
}

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("endpoint rejected request with status {status}: {body}")]
    Request { status: u16, body: String },
    #[error("giving up after {attempts} attempts (last status: {})", last_status.map(|s| s.to_string()).unwrap_or_else(|| "none".into()))]
    Transport {
        attempts: u32,
        last_status: Option<u16>,
        last_error: String,
    },
    #[error("unreadable response body: {0}")]
    Response(String),
    #[error("configuration: {0}")]
    Config(String),
}

/// Anything that can answer a chat conversation.
pub trait ChatBackend: Send + Sync {
    fn chat(&self, messages: &[Turn], cfg: &GenerationConfig) -> Result<ChatResponse, LlmError>;
}

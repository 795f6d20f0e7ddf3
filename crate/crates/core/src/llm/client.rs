use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::clock::{Clock, SystemClock};
use super::ratelimit::{RateLimit, RateLimiter};
use super::tokens::{CharHeuristic, TokenCounter};
use super::transport::{HttpTransport, Transport, TransportFailure};
use super::{
    ChatBackend, ChatRequest, ChatResponse, GenerationConfig, LlmError, ENV_API_KEY, ENV_ENDPOINT,
    ENV_RPM,
};
use crate::corpus::{Role, Turn};

/// Exponential backoff: retry `n` (0-based) waits `base * 2^n`, capped at
/// `max_delay`. With `jitter` the wait is drawn uniformly from the upper half
/// of that interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
    pub jitter: bool,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 5,
            base_delay: Duration::from_secs(1),
            max_delay: Duration::from_secs(60),
            jitter: false,
        }
    }
}

impl RetryPolicy {
    pub fn delay(&self, retry: u32) -> Duration {
        let factor = 2u32.saturating_pow(retry);
        let d = self.base_delay.saturating_mul(factor).min(self.max_delay);
        if self.jitter {
            let half = d / 2;
            half + half.mul_f64(rand::random::<f64>())
        } else {
            d
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ClientConfig {
    pub endpoint: Option<String>,
    pub api_key: Option<String>,
    pub rate_limit: Option<RateLimit>,
    pub retry: RetryPolicy,
}

impl ClientConfig {
    /// Reads `CITEFN_ENDPOINT`, `CITEFN_API_KEY` and `CITEFN_RPM`.
    pub fn from_env() -> Result<Self, LlmError> {
        let rate_limit = match std::env::var(ENV_RPM) {
            Ok(v) => Some(RateLimit::per_minute(v.trim().parse().map_err(|_| {
                LlmError::Config(format!("{ENV_RPM} must be a positive integer, got `{v}`"))
            })?)),
            Err(_) => None,
        };
        Ok(ClientConfig {
            endpoint: std::env::var(ENV_ENDPOINT).ok(),
            api_key: std::env::var(ENV_API_KEY).ok(),
            rate_limit,
            retry: RetryPolicy::default(),
        })
    }
}

/// Rate-limited, retrying chat client. Shareable across worker threads.
pub struct ChatClient<T: Transport> {
    transport: T,
    clock: Arc<dyn Clock>,
    limiter: RateLimiter,
    retry: RetryPolicy,
    counter: Box<dyn TokenCounter>,
    retries: AtomicU64,
    requests: AtomicU64,
}

impl ChatClient<HttpTransport> {
    pub fn http(config: &ClientConfig) -> Result<Self, LlmError> {
        let endpoint = config
            .endpoint
            .clone()
            .ok_or_else(|| LlmError::Config(format!("{ENV_ENDPOINT} is not set")))?;
        Ok(ChatClient::new(
            HttpTransport::new(endpoint, config.api_key.clone()),
            Arc::new(SystemClock::default()),
        )
        .with_rate_limit(config.rate_limit)
        .with_retry(config.retry))
    }
}

impl<T: Transport> ChatClient<T> {
    pub fn new(transport: T, clock: Arc<dyn Clock>) -> Self {
        ChatClient {
            transport,
            clock,
            limiter: RateLimiter::unlimited(),
            retry: RetryPolicy::default(),
            counter: Box::new(CharHeuristic),
            retries: AtomicU64::new(0),
            requests: AtomicU64::new(0),
        }
    }

    pub fn with_rate_limit(mut self, limit: Option<RateLimit>) -> Self {
        self.limiter = RateLimiter::new(limit);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_token_counter(mut self, counter: Box<dyn TokenCounter>) -> Self {
        self.counter = counter;
        self
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    /// Total retries performed by this client.
    pub fn retry_count(&self) -> u64 {
        self.retries.load(Ordering::Relaxed)
    }

    /// Total HTTP attempts issued, retries included.
    pub fn request_count(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }

    fn decode(&self, messages: &[Turn], body: &str) -> Result<ChatResponse, LlmError> {
        let v: serde_json::Value =
            serde_json::from_str(body).map_err(|e| LlmError::Response(e.to_string()))?;
        let content = v
            .pointer("/choices/0/message/content")
            .and_then(|c| c.as_str())
            .ok_or_else(|| LlmError::Response("missing choices[0].message.content".into()))?
            .to_string();
        let usage = |key: &str| v.pointer(&format!("/usage/{key}")).and_then(|x| x.as_u64());
        let input_tokens = usage("prompt_tokens").unwrap_or_else(|| {
            messages
                .iter()
                .map(|m| self.counter.count(&m.content) as u64)
                .sum()
        });
        let output_tokens =
            usage("completion_tokens").unwrap_or_else(|| self.counter.count(&content) as u64);
        Ok(ChatResponse {
            content,
            input_tokens,
            output_tokens,
        })
    }
}

impl<T: Transport> ChatBackend for ChatClient<T> {
    fn chat(&self, messages: &[Turn], cfg: &GenerationConfig) -> Result<ChatResponse, LlmError> {
        match messages.last() {
            None => return Err(LlmError::InvalidRequest("no messages".into())),
            Some(m) if m.role != Role::User => {
                return Err(LlmError::InvalidRequest("last message must be from the user".into()))
            }
            _ => {}
        }
        let request = ChatRequest {
            model: cfg.model_name.clone(),
            messages: messages.to_vec(),
            temperature: cfg.temperature(),
            max_tokens: cfg.max_output_tokens,
        };

        let mut retried = 0u32;
        loop {
            self.limiter.acquire(self.clock.as_ref());
            self.requests.fetch_add(1, Ordering::Relaxed);
            let (last_status, last_error) = match self.transport.send(&request, cfg.request_timeout) {
                Ok(resp) if (200..300).contains(&resp.status) => {
                    return self.decode(messages, &resp.body)
                }
                Ok(resp) if resp.status == 429 || (500..600).contains(&resp.status) => {
                    (Some(resp.status), resp.body)
                }
                Ok(resp) => {
                    return Err(LlmError::Request {
                        status: resp.status,
                        body: resp.body,
                    })
                }
                Err(e @ (TransportFailure::Timeout | TransportFailure::Connection(_))) => {
                    (None, e.to_string())
                }
            };
            if retried >= self.retry.max_retries {
                return Err(LlmError::Transport {
                    attempts: retried + 1,
                    last_status,
                    last_error,
                });
            }
            self.clock.sleep(self.retry.delay(retried));
            retried += 1;
            self.retries.fetch_add(1, Ordering::Relaxed);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::clock::MockClock;
    use crate::llm::mock::{MockScript, MockTransport, ScriptEntry};

    fn client(script: Vec<ScriptEntry>) -> (ChatClient<MockTransport>, MockClock) {
        let clock = MockClock::new();
        let c = ChatClient::new(MockTransport::new(MockScript(script)), Arc::new(clock.clone()));
        (c, clock)
    }

    fn ask() -> Vec<Turn> {
        vec![Turn::new(Role::User, "Was the data accessed?")]
    }

    #[test]
    fn scripted_reply_is_echoed() {
        let (c, _) = client(vec![ScriptEntry::reply("TRUE")]);
        let r = c.chat(&ask(), &GenerationConfig::default()).unwrap();
        assert_eq!(r.content, "TRUE");
        assert_eq!(c.retry_count(), 0);
    }

    #[test]
    fn two_429s_then_success() {
        let (c, clock) = client(vec![
            ScriptEntry::status(429),
            ScriptEntry::status(429),
            ScriptEntry::reply("ok"),
        ]);
        let r = c.chat(&ask(), &GenerationConfig::default()).unwrap();
        assert_eq!(r.content, "ok");
        assert_eq!(c.retry_count(), 2);
        assert_eq!(c.request_count(), 3);
        assert_eq!(clock.sleeps(), vec![Duration::from_secs(1), Duration::from_secs(2)]);
    }

    #[test]
    fn bad_request_is_not_retried() {
        let (c, clock) = client(vec![ScriptEntry::status(400), ScriptEntry::reply("never")]);
        let err = c.chat(&ask(), &GenerationConfig::default()).unwrap_err();
        assert!(matches!(err, LlmError::Request { status: 400, .. }));
        assert_eq!(c.retry_count(), 0);
        assert!(clock.sleeps().is_empty());
    }

    #[test]
    fn exhausted_retries_report_last_status() {
        let (c, _) = client(vec![ScriptEntry::status(503); 4]);
        let c = c.with_retry(RetryPolicy {
            max_retries: 3,
            ..RetryPolicy::default()
        });
        match c.chat(&ask(), &GenerationConfig::default()).unwrap_err() {
            LlmError::Transport {
                attempts,
                last_status,
                ..
            } => {
                assert_eq!(attempts, 4);
                assert_eq!(last_status, Some(503));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn timeouts_are_retried() {
        let (c, _) = client(vec![ScriptEntry::timeout(), ScriptEntry::reply("late")]);
        assert_eq!(c.chat(&ask(), &GenerationConfig::default()).unwrap().content, "late");
        assert_eq!(c.retry_count(), 1);
    }

    #[test]
    fn backoff_is_capped() {
        let p = RetryPolicy {
            max_retries: 10,
            base_delay: Duration::from_secs(1),
            max_delay: Duration::from_secs(10),
            jitter: false,
        };
        let delays: Vec<u64> = (0..6).map(|n| p.delay(n).as_secs()).collect();
        assert_eq!(delays, vec![1, 2, 4, 8, 10, 10]);
    }

    #[test]
    fn wire_request_is_deterministic() {
        let (c, _) = client(vec![ScriptEntry::reply("x")]);
        c.chat(&ask(), &GenerationConfig::default()).unwrap();
        let req = &c.transport().requests()[0];
        let v = serde_json::to_value(req).unwrap();
        assert_eq!(v["temperature"], 0.0);
        assert_eq!(v["messages"][0]["role"], "user");
        assert_eq!(v["max_tokens"], 1024);
    }

    #[test]
    fn usage_falls_back_to_counter() {
        let (c, _) = client(vec![ScriptEntry::reply("abcdefgh")]);
        let r = c
            .chat(&[Turn::new(Role::User, "x".repeat(400))], &GenerationConfig::default())
            .unwrap();
        assert_eq!((r.input_tokens, r.output_tokens), (100, 2));
    }

    #[test]
    fn reported_usage_wins() {
        let mut e = ScriptEntry::reply("TRUE");
        e.usage = Some(crate::llm::mock::ScriptUsage {
            prompt_tokens: 54600,
            completion_tokens: 246,
        });
        let (c, _) = client(vec![e]);
        let r = c.chat(&ask(), &GenerationConfig::default()).unwrap();
        assert_eq!((r.input_tokens, r.output_tokens), (54600, 246));
    }

    #[test]
    fn last_turn_must_be_user() {
        let (c, _) = client(vec![]);
        let msgs = vec![Turn::new(Role::User, "q"), Turn::new(Role::Assistant, "a")];
        assert!(matches!(
            c.chat(&msgs, &GenerationConfig::default()),
            Err(LlmError::InvalidRequest(_))
        ));
        assert!(matches!(
            c.chat(&[], &GenerationConfig::default()),
            Err(LlmError::InvalidRequest(_))
        ));
    }
}

//! Chat-completion access for annotation, extraction and rewriting.
//!
//! [`Gateway`] layers a content-addressed response cache, exponential-backoff
//! retries and a token-bucket rate limiter over a [`ChatBackend`]. Two
//! backends ship with the crate: [`HttpBackend`] for OpenAI-compatible
//! endpoints and [`FixtureBackend`] for offline playback of recorded replies.

mod backend;
mod cache;
mod prompts;
mod ratelimit;

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use backend::{BackendError, ChatBackend, FixtureBackend, HttpBackend};
pub use cache::ResponseCache;
pub use prompts::{render_prompt, Template, TEMPLATE_VERSION, TEXT_SLOT};
pub use ratelimit::TokenBucket;

pub const ENV_ENDPOINT: &str = "MATHCODE_LLM_ENDPOINT";
pub const ENV_API_KEY: &str = "MATHCODE_LLM_API_KEY";
pub const ENV_MODEL: &str = "MATHCODE_LLM_MODEL";

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("transport error after {attempts} attempt(s){}: {message}", .last_status.map(|s| format!(" (last status {s})")).unwrap_or_default())]
    Transport {
        attempts: u32,
        last_status: Option<u16>,
        message: String,
    },
    #[error("malformed response payload: {0}")]
    Protocol(String),
    #[error("no recorded fixture for request {key}")]
    FixtureMissing { key: String },
    #[error("gateway configuration: {0}")]
    Config(String),
    #[error("response cache: {0}")]
    Cache(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_id: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn user(model_id: impl Into<String>, prompt: impl Into<String>) -> Self {
        ChatRequest {
            model_id: model_id.into(),
            messages: vec![ChatMessage {
                role: Role::User,
                content: prompt.into(),
            }],
            temperature: 0.0,
            max_tokens: 2048,
        }
    }

    /// SHA-256 over the canonical JSON encoding of every field. Identical
    /// requests share a cache entry.
    pub fn key(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("request serializes");
        hex::encode(Sha256::digest(&canonical))
    }

    /// Hash of the messages alone; fixtures are keyed on this so recorded
    /// replies survive model-id or sampling changes.
    pub fn prompt_key(&self) -> String {
        let canonical = serde_json::to_vec(&self.messages).expect("messages serialize");
        hex::encode(Sha256::digest(&canonical))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Complete,
    /// Output hit the token limit; the text may be cut off mid-block.
    Length,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub finish_reason: FinishReason,
    pub latency_ms: u64,
    #[serde(default)]
    pub from_cache: bool,
}

impl ChatResponse {
    pub fn is_truncated(&self) -> bool {
        self.finish_reason == FinishReason::Length
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            base_delay_ms: 500,
            max_delay_ms: 8_000,
        }
    }
}

impl RetryPolicy {
    fn delay(&self, attempt: u32) -> Duration {
        let exp = self
            .base_delay_ms
            .saturating_mul(1u64 << attempt.saturating_sub(1).min(20));
        Duration::from_millis(exp.min(self.max_delay_ms))
    }
}

/// Request defaults applied by [`Gateway::prompt`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RequestDefaults {
    pub model_id: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for RequestDefaults {
    fn default() -> Self {
        RequestDefaults {
            model_id: "meta-llama/Llama-3.1-70B-Instruct".to_string(),
            temperature: 0.0,
            max_tokens: 2048,
        }
    }
}

/// Thread-safe completion client. Safe to share across worker threads.
pub struct Gateway {
    backend: Box<dyn ChatBackend>,
    cache: Option<ResponseCache>,
    retry: RetryPolicy,
    limiter: Option<TokenBucket>,
    defaults: RequestDefaults,
    backend_calls: AtomicU64,
}

impl Gateway {
    pub fn new(backend: impl ChatBackend + 'static) -> Self {
        Gateway {
            backend: Box::new(backend),
            cache: None,
            retry: RetryPolicy::default(),
            limiter: None,
            defaults: RequestDefaults::default(),
            backend_calls: AtomicU64::new(0),
        }
    }

    /// Replay recorded replies from `dir` instead of calling a network endpoint.
    pub fn fixtures(dir: impl Into<PathBuf>) -> Self {
        Self::new(FixtureBackend::new(dir))
    }

    /// HTTP backend configured from `MATHCODE_LLM_ENDPOINT`,
    /// `MATHCODE_LLM_API_KEY` and `MATHCODE_LLM_MODEL`.
    pub fn from_env() -> Result<Self, GatewayError> {
        let endpoint =
            std::env::var(ENV_ENDPOINT).map_err(|_| GatewayError::Config(format!("{ENV_ENDPOINT} is not set")))?;
        let api_key = std::env::var(ENV_API_KEY).ok();
        let mut gw = Self::new(HttpBackend::new(endpoint, api_key));
        if let Ok(model) = std::env::var(ENV_MODEL) {
            gw.defaults.model_id = model;
        }
        Ok(gw)
    }

    pub fn with_cache(mut self, cache: ResponseCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_rate_limit(mut self, limiter: TokenBucket) -> Self {
        self.limiter = Some(limiter);
        self
    }

    pub fn with_defaults(mut self, defaults: RequestDefaults) -> Self {
        self.defaults = defaults;
        self
    }

    pub fn defaults(&self) -> &RequestDefaults {
        &self.defaults
    }

    /// Number of requests that reached the backend (cache misses × attempts).
    pub fn backend_calls(&self) -> u64 {
        self.backend_calls.load(Ordering::Relaxed)
    }

    /// Single-user-message request with this gateway's defaults.
    pub fn prompt(&self, prompt: impl Into<String>) -> ChatRequest {
        ChatRequest {
            temperature: self.defaults.temperature,
            max_tokens: self.defaults.max_tokens,
            ..ChatRequest::user(self.defaults.model_id.clone(), prompt)
        }
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let key = request.key();
        if let Some(cache) = &self.cache {
            if let Some(mut hit) = cache.get(&key)? {
                hit.from_cache = true;
                return Ok(hit);
            }
        }

        let mut last_status = None;
        let mut last_message = String::new();
        let attempts = self.retry.max_attempts.max(1);
        for attempt in 1..=attempts {
            if let Some(limiter) = &self.limiter {
                limiter.acquire();
            }
            self.backend_calls.fetch_add(1, Ordering::Relaxed);
            let started = Instant::now();
            match self.backend.send(request) {
                Ok(mut response) => {
                    if response.latency_ms == 0 {
                        response.latency_ms = started.elapsed().as_millis() as u64;
                    }
                    response.from_cache = false;
                    if response.finish_reason != FinishReason::Error {
                        if let Some(cache) = &self.cache {
                            cache.put(&key, &response)?;
                        }
                    }
                    return Ok(response);
                }
                Err(BackendError::Transport {
                    status,
                    message,
                    retryable,
                }) => {
                    log::debug!("attempt {attempt}/{attempts} failed: {message}");
                    last_status = status;
                    last_message = message;
                    if !retryable {
                        return Err(GatewayError::Transport {
                            attempts: attempt,
                            last_status,
                            message: last_message,
                        });
                    }
                    if attempt < attempts {
                        std::thread::sleep(self.retry.delay(attempt));
                    }
                }
                Err(BackendError::Protocol(msg)) => return Err(GatewayError::Protocol(msg)),
                Err(BackendError::FixtureMissing(key)) => return Err(GatewayError::FixtureMissing { key }),
            }
        }
        Err(GatewayError::Transport {
            attempts,
            last_status,
            message: last_message,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicU32;
    use std::sync::Arc;

    struct Flaky {
        failures_left: AtomicU32,
        calls: Arc<AtomicU32>,
    }

    impl ChatBackend for Flaky {
        fn send(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            if self
                .failures_left
                .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
                .is_ok()
            {
                return Err(BackendError::Transport {
                    status: Some(503),
                    message: "unavailable".into(),
                    retryable: true,
                });
            }
            Ok(ChatResponse {
                text: format!("echo: {}", request.messages[0].content),
                finish_reason: FinishReason::Complete,
                latency_ms: 1,
                from_cache: false,
            })
        }
    }

    fn fast_retry() -> RetryPolicy {
        RetryPolicy {
            max_attempts: 3,
            base_delay_ms: 1,
            max_delay_ms: 2,
        }
    }

    #[test]
    fn request_key_is_deterministic_and_sensitive() {
        let a = ChatRequest::user("m", "hello");
        let b = ChatRequest::user("m", "hello");
        assert_eq!(a.key(), b.key());
        let c = ChatRequest {
            temperature: 0.7,
            ..a.clone()
        };
        assert_ne!(a.key(), c.key());
        assert_eq!(a.prompt_key(), c.prompt_key());
    }

    #[test]
    fn second_request_hits_cache() {
        let calls = Arc::new(AtomicU32::new(0));
        let dir = tempfile::tempdir().unwrap();
        let gw = Gateway::new(Flaky {
            failures_left: AtomicU32::new(0),
            calls: calls.clone(),
        })
        .with_cache(ResponseCache::new(dir.path()).unwrap());
        let req = gw.prompt("2+2");
        let first = gw.complete(&req).unwrap();
        let second = gw.complete(&req).unwrap();
        assert!(!first.from_cache);
        assert!(second.from_cache);
        assert_eq!(first.text, second.text);
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn retries_then_succeeds() {
        let calls = Arc::new(AtomicU32::new(0));
        let gw = Gateway::new(Flaky {
            failures_left: AtomicU32::new(2),
            calls: calls.clone(),
        })
        .with_retry(fast_retry());
        let resp = gw.complete(&gw.prompt("x")).unwrap();
        assert_eq!(resp.text, "echo: x");
        assert_eq!(calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn exhausted_retries_report_last_status() {
        let calls = Arc::new(AtomicU32::new(0));
        let gw = Gateway::new(Flaky {
            failures_left: AtomicU32::new(10),
            calls: calls.clone(),
        })
        .with_retry(fast_retry());
        match gw.complete(&gw.prompt("x")) {
            Err(GatewayError::Transport {
                attempts, last_status, ..
            }) => {
                assert_eq!(attempts, 3);
                assert_eq!(last_status, Some(503));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn backoff_doubles_and_caps() {
        let p = RetryPolicy {
            max_attempts: 5,
            base_delay_ms: 100,
            max_delay_ms: 300,
        };
        assert_eq!(p.delay(1), Duration::from_millis(100));
        assert_eq!(p.delay(2), Duration::from_millis(200));
        assert_eq!(p.delay(3), Duration::from_millis(300));
    }
}

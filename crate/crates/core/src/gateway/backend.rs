use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ChatRequest, ChatResponse, FinishReason};

#[derive(Debug, Clone, PartialEq)]
pub enum BackendError {
    Transport {
        status: Option<u16>,
        message: String,
        retryable: bool,
    },
    Protocol(String),
    FixtureMissing(String),
}

/// Something that turns one chat request into one response.
pub trait ChatBackend: Send + Sync {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError>;
}

/// OpenAI-compatible `chat/completions` endpoint.
pub struct HttpBackend {
    endpoint: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>) -> Self {
        Self::with_timeout(endpoint, api_key, Duration::from_secs(300))
    }

    pub fn with_timeout(endpoint: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpBackend {
            endpoint: endpoint.into(),
            api_key,
            agent,
        }
    }
}

pub(crate) fn parse_completion(body: &Value) -> Result<(String, FinishReason), BackendError> {
    let choice = body
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| BackendError::Protocol("response has no choices".into()))?;
    let text = choice
        .pointer("/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| BackendError::Protocol("choice has no message content".into()))?;
    let finish = match choice.get("finish_reason").and_then(Value::as_str) {
        Some("stop") | Some("eos") | None => FinishReason::Complete,
        Some("length") => FinishReason::Length,
        Some(_) => FinishReason::Error,
    };
    Ok((text.to_string(), finish))
}

impl ChatBackend for HttpBackend {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let body = json!({
            "model": request.model_id,
            "messages": request.messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let mut req = self
            .agent
            .post(&self.endpoint)
            .header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let started = Instant::now();
        let mut resp = req.send_json(&body).map_err(|e| BackendError::Transport {
            status: None,
            message: e.to_string(),
            retryable: true,
        })?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            let detail = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(BackendError::Transport {
                status: Some(status),
                message: format!("HTTP {status}: {}", detail.chars().take(200).collect::<String>()),
                retryable: status == 429 || status >= 500,
            });
        }
        let payload: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| BackendError::Protocol(e.to_string()))?;
        let (text, finish_reason) = parse_completion(&payload)?;
        Ok(ChatResponse {
            text,
            finish_reason,
            latency_ms: started.elapsed().as_millis() as u64,
            from_cache: false,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct FixtureRecord {
    text: String,
    #[serde(default = "complete")]
    finish_reason: FinishReason,
}

fn complete() -> FinishReason {
    FinishReason::Complete
}

/// Recorded replies keyed by [`ChatRequest::prompt_key`].
///
/// Layout: `<dir>/<prompt_key>.json` holding `{"text": ..., "finish_reason": ...}`
/// (`finish_reason` optional, default `complete`), or `<dir>/<prompt_key>.txt`
/// holding the raw reply text.
pub struct FixtureBackend {
    dir: PathBuf,
}

impl FixtureBackend {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        FixtureBackend { dir: dir.into() }
    }

    /// Record a reply for `request` under `dir`.
    pub fn record(
        dir: impl AsRef<Path>,
        request: &ChatRequest,
        text: &str,
        finish_reason: FinishReason,
    ) -> std::io::Result<PathBuf> {
        std::fs::create_dir_all(dir.as_ref())?;
        let path = dir.as_ref().join(format!("{}.json", request.prompt_key()));
        let record = FixtureRecord {
            text: text.to_string(),
            finish_reason,
        };
        std::fs::write(&path, serde_json::to_vec_pretty(&record)?)?;
        Ok(path)
    }
}

impl ChatBackend for FixtureBackend {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let key = request.prompt_key();
        let json_path = self.dir.join(format!("{key}.json"));
        let record = match std::fs::read(&json_path) {
            Ok(bytes) => serde_json::from_slice::<FixtureRecord>(&bytes)
                .map_err(|e| BackendError::Protocol(format!("{}: {e}", json_path.display())))?,
            Err(_) => match std::fs::read_to_string(self.dir.join(format!("{key}.txt"))) {
                Ok(text) => FixtureRecord {
                    text,
                    finish_reason: FinishReason::Complete,
                },
                Err(_) => return Err(BackendError::FixtureMissing(key)),
            },
        };
        Ok(ChatResponse {
            text: record.text,
            finish_reason: record.finish_reason,
            latency_ms: 0,
            from_cache: false,
        })
    }
}

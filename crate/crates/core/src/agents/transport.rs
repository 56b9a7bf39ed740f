//! OpenAI-compatible chat-completions transport and a retrying client that
//! records token usage in a [`Ledger`].

use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::ledger::{Ledger, ModelRole, TokenCounts};

pub const DEFAULT_TEMPERATURE: f64 = 1.0;
pub const DEFAULT_MAX_TOKENS: u32 = 3192;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        Self { role: "user".into(), content: content.into() }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self { role: "system".into(), content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatResponse {
    pub content: String,
    pub usage: Option<Usage>,
}

#[derive(Debug, Clone, Error)]
pub enum TransportError {
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("network error: {0}")]
    Network(String),
    #[error("undecodable response: {0}")]
    Decode(String),
    #[error("missing API key in environment variable `{0}`")]
    MissingKey(String),
}

impl TransportError {
    /// Client errors other than rate limiting are not worth retrying.
    pub fn is_retryable(&self) -> bool {
        match self {
            TransportError::Http { status, .. } => *status == 429 || *status >= 500,
            TransportError::Network(_) => true,
            TransportError::Decode(_) | TransportError::MissingKey(_) => false,
        }
    }
}

pub trait Transport: Send + Sync {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError>;
}

/// Whitespace-token approximation used when a response carries no usage block.
pub fn approx_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

pub fn approx_prompt_tokens(messages: &[ChatMessage]) -> u64 {
    messages.iter().map(|m| approx_tokens(&m.content)).sum()
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    content: Option<String>,
}

/// HTTP transport posting to `{base_url}/chat/completions`.
pub struct HttpTransport {
    endpoint: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpTransport {
    /// Reads the bearer token from `api_key_env`; a missing variable is an
    /// error only when `require_key` is set.
    pub fn new(base_url: &str, api_key_env: &str, require_key: bool, timeout: Duration) -> Result<Self, TransportError> {
        let api_key = std::env::var(api_key_env).ok().filter(|k| !k.is_empty());
        if require_key && api_key.is_none() {
            return Err(TransportError::MissingKey(api_key_env.to_string()));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self { endpoint: format!("{}/chat/completions", base_url.trim_end_matches('/')), api_key, agent })
    }
}

impl Transport for HttpTransport {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError> {
        let mut call = self.agent.post(&self.endpoint).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = call.send_json(request).map_err(|e| TransportError::Network(e.to_string()))?;
        let status = response.status().as_u16();
        let body = response.body_mut().read_to_string().map_err(|e| TransportError::Network(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(TransportError::Http { status, body });
        }
        let wire: WireResponse = serde_json::from_str(&body).map_err(|e| TransportError::Decode(e.to_string()))?;
        let content = wire
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| TransportError::Decode("no choices".into()))?;
        Ok(ChatResponse { content, usage: wire.usage })
    }
}

type Responder = dyn Fn(&ChatRequest, usize) -> Result<String, TransportError> + Send + Sync;

/// In-process transport driven by a closure of `(request, call index)`.
/// Keeps its own token tally for conservation checks.
pub struct ScriptedTransport {
    responder: Box<Responder>,
    calls: AtomicUsize,
    prompt_tokens: AtomicU64,
    completion_tokens: AtomicU64,
}

impl ScriptedTransport {
    pub fn new(responder: impl Fn(&ChatRequest, usize) -> Result<String, TransportError> + Send + Sync + 'static) -> Self {
        Self {
            responder: Box::new(responder),
            calls: AtomicUsize::new(0),
            prompt_tokens: AtomicU64::new(0),
            completion_tokens: AtomicU64::new(0),
        }
    }

    /// Cycles through `replies` in call order.
    pub fn cycling(replies: Vec<String>) -> Self {
        Self::new(move |_, i| Ok(replies[i % replies.len()].clone()))
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn served_tokens(&self) -> TokenCounts {
        TokenCounts {
            prompt_tokens: self.prompt_tokens.load(Ordering::SeqCst),
            completion_tokens: self.completion_tokens.load(Ordering::SeqCst),
        }
    }
}

impl Transport for ScriptedTransport {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError> {
        let index = self.calls.fetch_add(1, Ordering::SeqCst);
        let content = (self.responder)(request, index)?;
        let usage = Usage { prompt_tokens: approx_prompt_tokens(&request.messages), completion_tokens: approx_tokens(&content) };
        self.prompt_tokens.fetch_add(usage.prompt_tokens, Ordering::SeqCst);
        self.completion_tokens.fetch_add(usage.completion_tokens, Ordering::SeqCst);
        Ok(ChatResponse { content, usage: Some(usage) })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { attempts: 3, base_delay_ms: 500 }
    }
}

impl RetryPolicy {
    pub fn immediate(attempts: u32) -> Self {
        Self { attempts, base_delay_ms: 0 }
    }
}

/// A model endpoint bound to a role, with retries and ledger accounting.
#[derive(Clone)]
pub struct ChatClient {
    pub transport: Arc<dyn Transport>,
    pub model: String,
    pub role: ModelRole,
    pub temperature: f64,
    pub max_tokens: u32,
    pub retry: RetryPolicy,
    pub ledger: Option<Arc<Ledger>>,
}

impl ChatClient {
    pub fn new(transport: Arc<dyn Transport>, model: impl Into<String>, role: ModelRole) -> Self {
        Self {
            transport,
            model: model.into(),
            role,
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
            retry: RetryPolicy::default(),
            ledger: None,
        }
    }

    pub fn with_ledger(mut self, ledger: Arc<Ledger>) -> Self {
        self.ledger = Some(ledger);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// Sends one prompt, retrying transport failures with exponential backoff.
    pub fn complete(&self, task_id: &str, messages: Vec<ChatMessage>, seed: Option<u64>) -> Result<String, TransportError> {
        let request = ChatRequest {
            model: self.model.clone(),
            messages,
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            seed,
        };
        let attempts = self.retry.attempts.max(1);
        let mut last = None;
        for attempt in 0..attempts {
            match self.transport.send(&request) {
                Ok(response) => {
                    let counts = match response.usage {
                        Some(u) => TokenCounts { prompt_tokens: u.prompt_tokens, completion_tokens: u.completion_tokens },
                        None => TokenCounts {
                            prompt_tokens: approx_prompt_tokens(&request.messages),
                            completion_tokens: approx_tokens(&response.content),
                        },
                    };
                    if let Some(ledger) = &self.ledger {
                        ledger.record_tokens(task_id, self.role, &self.model, counts);
                    }
                    return Ok(response.content);
                }
                Err(err) if err.is_retryable() && attempt + 1 < attempts => {
                    log::warn!("{} call failed (attempt {}): {err}", self.model, attempt + 1);
                    let delay = self.retry.base_delay_ms.saturating_mul(1 << attempt);
                    if delay > 0 {
                        std::thread::sleep(Duration::from_millis(delay));
                    }
                    last = Some(err);
                }
                Err(err) => return Err(err),
            }
        }
        Err(last.unwrap_or_else(|| TransportError::Network("no attempts made".into())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn retries_then_succeeds() {
        let transport = Arc::new(ScriptedTransport::new(|_, i| {
            if i < 2 {
                Err(TransportError::Http { status: 503, body: "busy".into() })
            } else {
                Ok("fine answer".into())
            }
        }));
        let ledger = Arc::new(Ledger::new());
        let client = ChatClient::new(transport.clone(), "gpt-4o", ModelRole::Value)
            .with_retry(RetryPolicy::immediate(3))
            .with_ledger(ledger.clone());
        let out = client.complete("t", vec![ChatMessage::user("three word prompt")], None).unwrap();
        assert_eq!(out, "fine answer");
        assert_eq!(transport.calls(), 3);
        let snap = ledger.snapshot();
        assert_eq!(snap.per_model()["gpt-4o"], TokenCounts { prompt_tokens: 3, completion_tokens: 2 });
        assert_eq!(snap.transport_calls(), 1);
    }

    #[test]
    fn gives_up_after_attempts() {
        let transport = Arc::new(ScriptedTransport::new(|_, _| Err(TransportError::Network("down".into()))));
        let client = ChatClient::new(transport.clone(), "m", ModelRole::Policy).with_retry(RetryPolicy::immediate(3));
        assert!(client.complete("t", vec![ChatMessage::user("x")], None).is_err());
        assert_eq!(transport.calls(), 3);
    }

    #[test]
    fn client_errors_not_retried() {
        let transport = Arc::new(ScriptedTransport::new(|_, _| Err(TransportError::Http { status: 400, body: "bad".into() })));
        let client = ChatClient::new(transport.clone(), "m", ModelRole::Policy).with_retry(RetryPolicy::immediate(3));
        assert!(client.complete("t", vec![ChatMessage::user("x")], None).is_err());
        assert_eq!(transport.calls(), 1);
    }

    #[test]
    fn request_wire_shape() {
        let request = ChatRequest {
            model: "gpt-4o".into(),
            messages: vec![ChatMessage::user("hi")],
            temperature: 1.0,
            max_tokens: 3192,
            seed: None,
        };
        let json = serde_json::to_value(&request).unwrap();
        assert_eq!(
            json,
            serde_json::json!({"model": "gpt-4o", "messages": [{"role": "user", "content": "hi"}], "temperature": 1.0, "max_tokens": 3192})
        );
    }
}

//! Access to generative-text backends.
//!
//! [`LlmClient::generate`] wraps any [`Backend`] with stop-sequence
//! truncation, a timeout, and cooperative cancellation. Tests and demos use
//! [`FixtureBackend`], which replays completions keyed by prompt digest and
//! attempt tag; [`HttpBackend`] talks to a live completion endpoint and
//! [`RecordingBackend`] captures its answers into a fixture store.

mod digest;
mod fixture;
mod http;
mod record;

use std::sync::Arc;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio_util::sync::CancellationToken;

pub use digest::{PromptDigest, normalize_digest};
pub use fixture::{AuthoredFixture, FixtureAuthoring, FixtureBackend, FixtureStore, fixture_key};
pub use http::HttpBackend;
pub use record::{RecordingBackend, record};

pub const DEFAULT_TEMPERATURE: f32 = 0.7;
pub const DEFAULT_LIST_MAX_TOKENS: u32 = 64;
pub const DEFAULT_SCENE_MAX_TOKENS: u32 = 128;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LlmError {
    #[error("invalid generation request: {0}")]
    InvalidRequest(String),
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("generation timed out")]
    Timeout,
    #[error("generation cancelled")]
    Cancelled,
    #[error("no fixture recorded for {key}")]
    MissingFixture { key: String },
    #[error("fixture store is not in recording mode")]
    RecordingDisabled,
    #[error("fixture store error: {0}")]
    Fixture(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt_text: String,
    pub max_tokens: u32,
    pub temperature: f32,
    pub stop_sequences: Vec<String>,
    /// Varies across regeneration attempts of the same prompt.
    pub attempt_tag: u32,
}

impl GenerationRequest {
    pub fn new(prompt_text: impl Into<String>, stop_sequences: Vec<String>) -> Self {
        Self {
            prompt_text: prompt_text.into(),
            max_tokens: DEFAULT_LIST_MAX_TOKENS,
            temperature: DEFAULT_TEMPERATURE,
            stop_sequences,
            attempt_tag: 0,
        }
    }

    pub fn with_attempt(mut self, attempt_tag: u32) -> Self {
        self.attempt_tag = attempt_tag;
        self
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.prompt_text.is_empty() {
            return Err(LlmError::InvalidRequest("prompt text is empty".into()));
        }
        if self.max_tokens == 0 {
            return Err(LlmError::InvalidRequest("max_tokens must be at least 1".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(LlmError::InvalidRequest("temperature must lie in [0, 2]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    StopSequence,
    Length,
    Cancelled,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub latency: Duration,
    pub backend_id: String,
    pub finish_reason: FinishReason,
}

impl Completion {
    fn cancelled(backend_id: &str, latency: Duration) -> Self {
        Self {
            text: String::new(),
            latency,
            backend_id: backend_id.to_string(),
            finish_reason: FinishReason::Cancelled,
        }
    }

    /// The completion text, or the error a cancelled or timed-out
    /// completion stands for. Cancelled text must never be parsed.
    pub fn text_for_parsing(&self) -> Result<&str, LlmError> {
        match self.finish_reason {
            FinishReason::Cancelled => Err(LlmError::Cancelled),
            FinishReason::Error => Err(LlmError::Timeout),
            FinishReason::StopSequence | FinishReason::Length => Ok(&self.text),
        }
    }
}

/// What a backend hands back before client-side post-processing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendReply {
    pub text: String,
    #[serde(default)]
    pub finish_reason: Option<FinishReason>,
}

impl BackendReply {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            finish_reason: None,
        }
    }
}

/// Adapter point for completion services.
#[async_trait]
pub trait Backend: Send + Sync {
    fn id(&self) -> &str;

    async fn complete(&self, request: &GenerationRequest) -> Result<BackendReply, LlmError>;

    /// Whether the backend currently answers requests.
    async fn healthy(&self) -> bool {
        true
    }
}

/// Cuts `text` at the earliest stop sequence. Returns whether a cut happened.
pub fn truncate_at_stop(text: &str, stops: &[String]) -> (String, bool) {
    match stops
        .iter()
        .filter(|s| !s.is_empty())
        .filter_map(|s| text.find(s.as_str()))
        .min()
    {
        Some(at) => (text[..at].to_string(), true),
        None => (text.to_string(), false),
    }
}

fn finish(reply: BackendReply, request: &GenerationRequest, backend_id: &str, latency: Duration) -> Completion {
    let (text, cut) = truncate_at_stop(&reply.text, &request.stop_sequences);
    let finish_reason = if cut {
        FinishReason::StopSequence
    } else {
        reply.finish_reason.unwrap_or(FinishReason::Length)
    };
    Completion {
        text,
        latency,
        backend_id: backend_id.to_string(),
        finish_reason,
    }
}

#[derive(Clone)]
pub struct LlmClient {
    backend: Arc<dyn Backend>,
    timeout: Duration,
}

impl std::fmt::Debug for LlmClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LlmClient")
            .field("backend", &self.backend.id())
            .field("timeout", &self.timeout)
            .finish()
    }
}

impl LlmClient {
    pub fn new(backend: Arc<dyn Backend>) -> Self {
        Self {
            backend,
            timeout: DEFAULT_TIMEOUT,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn backend(&self) -> &Arc<dyn Backend> {
        &self.backend
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    /// Runs one generation.
    ///
    /// Cancellation yields a completion with [`FinishReason::Cancelled`] and
    /// empty text; timeout yields [`FinishReason::Error`]. Once `cancel` has
    /// fired no backend text is ever returned for this call.
    pub async fn generate(
        &self,
        request: &GenerationRequest,
        cancel: &CancellationToken,
    ) -> Result<Completion, LlmError> {
        request.validate()?;
        let backend_id = self.backend.id();
        if cancel.is_cancelled() {
            return Ok(Completion::cancelled(backend_id, Duration::ZERO));
        }

        let started = Instant::now();
        let outcome = tokio::select! {
            biased;
            _ = cancel.cancelled() => None,
            result = tokio::time::timeout(self.timeout, self.backend.complete(request)) => Some(result),
        };
        let latency = started.elapsed();

        match outcome {
            _ if cancel.is_cancelled() => Ok(Completion::cancelled(backend_id, latency)),
            None => Ok(Completion::cancelled(backend_id, latency)),
            Some(Err(_elapsed)) => {
                tracing::warn!(backend = backend_id, ?latency, "generation timed out");
                Ok(Completion {
                    text: String::new(),
                    latency,
                    backend_id: backend_id.to_string(),
                    finish_reason: FinishReason::Error,
                })
            }
            Some(Ok(reply)) => Ok(finish(reply?, request, backend_id, latency)),
        }
    }
}

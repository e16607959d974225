use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use super::{Backend, BackendReply, FinishReason, GenerationRequest, LlmError};

/// Client for the minimal JSON completion protocol:
///
/// request `{"prompt", "max_tokens", "temperature", "stop"}`,
/// response `{"text", "finish_reason"}` where `finish_reason` is `"stop"`
/// or `"length"` and may be omitted.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    url: String,
    token: Option<String>,
    client: reqwest::Client,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    prompt: &'a str,
    max_tokens: u32,
    temperature: f32,
    stop: &'a [String],
}

#[derive(Deserialize)]
struct WireResponse {
    text: String,
    #[serde(default)]
    finish_reason: Option<String>,
}

impl HttpBackend {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            token: None,
            client: reqwest::Client::new(),
        }
    }

    pub fn with_token(mut self, token: Option<String>) -> Self {
        self.token = token.filter(|t| !t.is_empty());
        self
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

#[async_trait]
impl Backend for HttpBackend {
    fn id(&self) -> &str {
        "http"
    }

    async fn complete(&self, request: &GenerationRequest) -> Result<BackendReply, LlmError> {
        let body = WireRequest {
            prompt: &request.prompt_text,
            max_tokens: request.max_tokens,
            temperature: request.temperature,
            stop: &request.stop_sequences,
        };
        let mut builder = self.client.post(&self.url).json(&body);
        if let Some(token) = &self.token {
            builder = builder.bearer_auth(token);
        }
        let response = builder
            .send()
            .await
            .map_err(|e| LlmError::BackendUnavailable(without_url(e).to_string()))?;
        let status = response.status();
        if !status.is_success() {
            return Err(LlmError::BackendUnavailable(format!("backend answered HTTP {status}")));
        }
        let wire: WireResponse = response
            .json()
            .await
            .map_err(|e| LlmError::BackendUnavailable(format!("unreadable backend reply: {}", without_url(e))))?;
        let finish_reason = match wire.finish_reason.as_deref() {
            Some("stop") => Some(FinishReason::StopSequence),
            Some("length") => Some(FinishReason::Length),
            _ => None,
        };
        Ok(BackendReply {
            text: wire.text,
            finish_reason,
        })
    }

    async fn healthy(&self) -> bool {
        self.client
            .get(&self.url)
            .timeout(Duration::from_secs(2))
            .send()
            .await
            .is_ok()
    }
}

fn without_url(e: reqwest::Error) -> reqwest::Error {
    e.without_url()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::LlmClient;
    use axum::{Json, Router, http::HeaderMap, routing::post};
    use std::sync::Arc;
    use tokio_util::sync::CancellationToken;

    async fn serve(router: Router) -> String {
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let addr = listener.local_addr().unwrap();
        tokio::spawn(async move { axum::serve(listener, router).await.unwrap() });
        format!("http://{addr}/v1/complete")
    }

    #[tokio::test]
    async fn speaks_the_wire_protocol_and_truncates() {
        let router = Router::new().route(
            "/v1/complete",
            post(|headers: HeaderMap, Json(body): Json<serde_json::Value>| async move {
                assert_eq!(body["stop"], serde_json::json!(["\n"]));
                assert_eq!(body["max_tokens"], 64);
                let auth = headers.get("authorization").map(|v| v.to_str().unwrap().to_string());
                assert_eq!(auth.as_deref(), Some("Bearer sekrit"));
                Json(serde_json::json!({"text": "ocean\nhospital", "finish_reason": "stop"}))
            }),
        );
        let url = serve(router).await;
        let backend = HttpBackend::new(url).with_token(Some("sekrit".into()));
        assert!(backend.healthy().await);
        let client = LlmClient::new(Arc::new(backend));
        let request = GenerationRequest::new("Name: environment\nSuggestion:", vec!["\n".into()]);
        let c = client.generate(&request, &CancellationToken::new()).await.unwrap();
        assert_eq!(c.text, "ocean");
        assert_eq!(c.backend_id, "http");
    }

    #[tokio::test]
    async fn server_errors_and_unreachable_hosts_are_unavailable() {
        let router = Router::new().route(
            "/v1/complete",
            post(|| async { (axum::http::StatusCode::BAD_GATEWAY, "upstream exploded") }),
        );
        let url = serve(router).await;
        let request = GenerationRequest::new("p", vec!["\n".into()]);
        let err = HttpBackend::new(url).complete(&request).await.unwrap_err();
        assert_eq!(err, LlmError::BackendUnavailable("backend answered HTTP 502 Bad Gateway".into()));

        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let dead = format!("http://{}/", listener.local_addr().unwrap());
        drop(listener);
        let backend = HttpBackend::new(dead);
        assert!(matches!(backend.complete(&request).await, Err(LlmError::BackendUnavailable(_))));
        assert!(!backend.healthy().await);
    }
}

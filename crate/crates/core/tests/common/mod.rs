#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use axum::Router;
use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use promptassist::api::{self, AppState};
use promptassist::clock::{SequentialIds, SteppingClock};
use promptassist::config::{BackendMode, Runtime};
use promptassist::llm::{FixtureBackend, FixtureStore, LlmClient};
use promptassist::persistence::SessionStore;
use promptassist::suggest::{SuggestConfig, SuggestionEngine};
use promptassist::templates::TemplateRegistry;
use promptassist::wizard::AssemblyOptions;
use serde_json::{Value, json};
use tower::ServiceExt;

pub const PARK_SCENE: &str = "A young man is sitting on a bench near a small tree. He is wearing a green pullover";
pub const PARK_PROMPT: &str =
    "A young man is sitting on a bench near a small tree. He is wearing a green pullover, oil painting";

pub fn crate_dir() -> &'static Path {
    Path::new(env!("CARGO_MANIFEST_DIR"))
}

pub fn fixture_path() -> PathBuf {
    crate_dir().join("fixtures/sample.json")
}

pub fn sample_store() -> Arc<FixtureStore> {
    Arc::new(FixtureStore::load(&fixture_path()).expect("sample fixtures load"))
}

pub fn fixture_runtime(latency: Duration) -> (Runtime, Arc<FixtureBackend>) {
    let backend = Arc::new(FixtureBackend::new(sample_store()).with_latency(latency));
    let engine = SuggestionEngine::new(
        LlmClient::new(backend.clone()),
        TemplateRegistry::builtin(),
        SuggestConfig::default(),
    );
    let runtime = Runtime {
        mode: BackendMode::Fixture,
        engine,
        fixtures: None,
        fixture_path: Some(fixture_path()),
    };
    (runtime, backend)
}

/// Deterministic state over the sample fixtures.
pub fn app_state(latency: Duration, store: Option<SessionStore>) -> (Arc<AppState>, Arc<FixtureBackend>) {
    let (runtime, backend) = fixture_runtime(latency);
    let state = AppState::new(
        runtime,
        store,
        Arc::new(SteppingClock::default()),
        Arc::new(SequentialIds::default()),
        AssemblyOptions::default(),
    );
    (Arc::new(state), backend)
}

pub fn router(state: Arc<AppState>) -> Router {
    api::app(state, Some("http://localhost:5173")).expect("valid origin")
}

pub async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let request = Request::builder().method(method).uri(uri);
    let request = match body {
        Some(b) => request
            .header("content-type", "application/json")
            .body(Body::from(b.to_string())),
        None => request.body(Body::empty()),
    }
    .expect("request builds");
    let response = app.clone().oneshot(request).await.expect("router is infallible");
    let status = response.status();
    let bytes = axum::body::to_bytes(response.into_body(), usize::MAX).await.expect("body reads");
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).expect("every response is JSON")
    };
    (status, value)
}

pub async fn new_session(app: &Router) -> String {
    let (status, body) = call(app, Method::POST, "/sessions", None).await;
    assert_eq!(status, StatusCode::CREATED);
    body["id"].as_str().expect("id").to_string()
}

pub async fn act(app: &Router, id: &str, body: Value) -> (StatusCode, Value) {
    call(app, Method::POST, &format!("/sessions/{id}/action"), Some(body)).await
}

pub async fn suggest(app: &Router, id: &str, body: Value) -> (StatusCode, Value) {
    call(app, Method::POST, &format!("/sessions/{id}/suggest"), Some(body)).await
}

/// The park / tree + bench / scene / oil painting walkthrough, choosing
/// everything from suggestions. Returns the `/prompt` body.
pub async fn park_over_api(app: &Router) -> (String, Value) {
    let id = new_session(app).await;
    let (_, env) = suggest(app, &id, json!({"step": "environment"})).await;
    assert_eq!(env["items"][0], "park");
    act(app, &id, json!({"kind": "accept", "payload": "park"})).await;
    let (_, subjects) = suggest(app, &id, json!({"step": "subjects"})).await;
    assert_eq!(subjects["items"][0], "tree");
    assert_eq!(subjects["items"][1], "bench");
    act(app, &id, json!({"kind": "accept", "payload": "tree", "advance": false})).await;
    act(app, &id, json!({"kind": "accept", "payload": "bench"})).await;
    act(app, &id, json!({"kind": "skip"})).await;
    let (_, scenes) = suggest(app, &id, json!({"step": "scene"})).await;
    assert_eq!(scenes["items"][0], PARK_SCENE);
    act(app, &id, json!({"kind": "accept", "payload": PARK_SCENE})).await;
    let (_, styles) = suggest(app, &id, json!({"step": "style"})).await;
    assert!(styles["items"].as_array().unwrap().contains(&json!("oil painting")));
    let (status, _) = act(app, &id, json!({"kind": "accept", "payload": "oil painting"})).await;
    assert_eq!(status, StatusCode::OK);
    let (status, prompt) = call(app, Method::GET, &format!("/sessions/{id}/prompt"), None).await;
    assert_eq!(status, StatusCode::OK, "{prompt}");
    (id, prompt)
}

pub struct Schemas {
    registry: jsonschema::Registry<'static>,
}

pub const API_SCHEMA_ID: &str = "https://promptassist.invalid/api.schema.json";
pub const RECORD_SCHEMA_ID: &str = "https://promptassist.invalid/session-record.schema.json";

fn load_json(rel: &str) -> Value {
    let text = std::fs::read_to_string(crate_dir().join(rel)).expect("schema readable");
    serde_json::from_str(&text).expect("schema is JSON")
}

impl Schemas {
    pub fn load() -> Self {
        let registry = jsonschema::Registry::new()
            .add(API_SCHEMA_ID, load_json("docs/api.schema.json"))
            .expect("api schema registers")
            .add(RECORD_SCHEMA_ID, load_json("docs/session-record.schema.json"))
            .expect("record schema registers")
            .prepare()
            .expect("registry prepares");
        Self { registry }
    }

    fn check(&self, reference: &str, value: &Value) -> Result<(), String> {
        let validator = jsonschema::options()
            .with_registry(&self.registry)
            .build(&json!({ "$ref": reference }))
            .map_err(|e| format!("schema {reference}: {e}"))?;
        let errors: Vec<String> = validator.iter_errors(value).map(|e| e.to_string()).collect();
        if errors.is_empty() {
            Ok(())
        } else {
            Err(format!("{reference}: {} in {value}", errors.join("; ")))
        }
    }

    /// Validates against `api.schema.json#/$defs/<name>`.
    pub fn api(&self, name: &str, value: &Value) -> Result<(), String> {
        self.check(&format!("{API_SCHEMA_ID}#/$defs/{name}"), value)
    }

    pub fn record(&self, value: &Value) -> Result<(), String> {
        self.check(RECORD_SCHEMA_ID, value)
    }
}

/// A deterministic completion endpoint answering every prompt by its last line.
pub async fn mock_backend() -> String {
    use axum::Json;
    use axum::routing::post;

    async fn complete(Json(body): Json<Value>) -> Json<Value> {
        let prompt = body["prompt"].as_str().unwrap_or_default();
        let text = if prompt.ends_with("scene:") {
            " A cat is sitting under a tree next to a bench"
        } else if prompt.ends_with("Suggestion:") {
            " garden"
        } else {
            " alpha, beta, gamma, delta, epsilon, zeta, eta, theta, iota, kappa"
        };
        Json(json!({"text": text, "finish_reason": "stop"}))
    }

    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, axum::Router::new().route("/v1/complete", post(complete))).await });
    format!("http://{addr}/v1/complete")
}

/// An address nothing listens on.
pub fn dead_backend() -> String {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    format!("http://{addr}/v1/complete")
}

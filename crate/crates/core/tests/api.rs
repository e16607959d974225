mod common;

use std::time::Duration;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use common::*;
use promptassist::api::{AppError, error_mapping};
use promptassist::config::BackendMode;
use promptassist::llm::LlmError;
use promptassist::persistence::{SessionStore, StoreError};
use promptassist::suggest::SuggestError;
use promptassist::wizard::{Step, WizardError};
use serde_json::{Value, json};
use tower::ServiceExt;

#[tokio::test]
async fn walkthrough_matches_schema_and_caption() {
    let schemas = Schemas::load();
    let (state, _) = app_state(Duration::ZERO, None);
    let app = router(state);
    let (id, prompt) = park_over_api(&app).await;
    schemas.api("PromptResponse", &prompt).unwrap();
    assert_eq!(prompt["prompt"]["text"], PARK_PROMPT);
    assert_eq!(prompt["prompt"]["effort"]["typed_keystrokes"], 0);
    assert_eq!(prompt["prompt"]["effort"]["savings_ratio"], 1.0);

    let (status, session) = call(&app, Method::GET, &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    schemas.api("Session", &session).unwrap();
    assert_eq!(session["events"].as_array().unwrap().last().unwrap()["kind"], "assembled");

    let (_, list) = call(&app, Method::GET, "/sessions", None).await;
    schemas.api("SessionList", &list).unwrap();
    assert_eq!(list[0]["preview"], PARK_PROMPT);

    let (_, subjects) = suggest(&app, &id, json!({"step": "subjects", "inputs": ["school"]})).await;
    schemas.api("SuggestResponse", &subjects).unwrap();
    assert_eq!(subjects["items"].as_array().unwrap().len(), 12);
}

async fn snapshot(app: &axum::Router, id: &str) -> Value {
    call(app, Method::GET, &format!("/sessions/{id}"), None).await.1
}

#[tokio::test]
async fn errors_never_mutate_the_session() {
    let schemas = Schemas::load();
    let dir = tempfile::tempdir().unwrap();
    let (state, _) = app_state(Duration::ZERO, Some(SessionStore::new(dir.path())));
    let app = router(state);
    let id = new_session(&app).await;
    act(&app, &id, json!({"kind": "accept", "payload": "park"})).await;
    act(&app, &id, json!({"kind": "accept", "payload": "tree"})).await;
    act(&app, &id, json!({"kind": "skip"})).await;

    let path = dir.path().join(format!("{id}.json"));
    let file_before = std::fs::read(&path).unwrap();
    let before = snapshot(&app, &id).await;
    assert_eq!(before["step"], "scene");

    let cases: Vec<(Value, StatusCode, &str)> = vec![
        (json!({"kind": "skip"}), StatusCode::CONFLICT, "skip_not_allowed"),
        (json!({"kind": "type", "payload": "   "}), StatusCode::UNPROCESSABLE_ENTITY, "empty_payload"),
        (json!({"kind": "accept", "step": "style", "payload": "oil painting"}), StatusCode::CONFLICT, "wrong_step"),
        (json!({"kind": "replace_word", "target": "tree", "payload": "oak"}), StatusCode::CONFLICT, "no_scene"),
        (json!({"kind": "edit", "payload": "x"}), StatusCode::BAD_REQUEST, "invalid_request"),
        (json!({"kind": "dance"}), StatusCode::BAD_REQUEST, "invalid_request"),
        (json!({}), StatusCode::BAD_REQUEST, "invalid_request"),
    ];
    for (body, status, code) in cases {
        let (got, err) = act(&app, &id, body.clone()).await;
        assert_eq!(got, status, "{body} -> {err}");
        assert_eq!(err["error"]["code"], code, "{body}");
        schemas.api("ErrorBody", &err).unwrap();
        assert_eq!(snapshot(&app, &id).await, before, "{body} mutated the session");
    }

    // suggestion failures leave the session alone too
    let (status, err) = suggest(&app, &id, json!({"step": "subjects", "inputs": ["volcano"]})).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(err["error"]["code"], "missing_fixture");
    let (status, err) = suggest(&app, &id, json!({"step": "scene", "inputs": []})).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(err["error"]["code"], "invalid_request");
    let (status, err) = call(&app, Method::GET, &format!("/sessions/{id}/prompt"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(err["error"]["code"], "no_scene");
    assert_eq!(err["error"]["message"], "Your prompt needs a scene before it can be finished.");

    assert_eq!(snapshot(&app, &id).await, before);
    assert_eq!(std::fs::read(&path).unwrap(), file_before);

    // a scene is set: replacing a missing word is refused without change
    act(&app, &id, json!({"kind": "type", "payload": "a tree in a park"})).await;
    let before = snapshot(&app, &id).await;
    let (status, err) = act(&app, &id, json!({"kind": "replace_word", "target": "bench", "payload": "chair"})).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(err["error"]["code"], "word_not_found");
    assert_eq!(snapshot(&app, &id).await, before);
}

#[tokio::test]
async fn unknown_sessions_routes_and_bodies() {
    let (state, _) = app_state(Duration::ZERO, None);
    let app = router(state);
    for uri in [
        "/sessions/00000000-0000-0000-0000-00000000beef",
        "/sessions/not-a-uuid",
        "/nothing/here",
    ] {
        let (status, body) = call(&app, Method::GET, uri, None).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{uri}");
        assert_eq!(body["error"]["code"], "not_found");
    }
    let id = new_session(&app).await;
    let request = Request::builder()
        .method(Method::POST)
        .uri(format!("/sessions/{id}/action"))
        .body(Body::from("{not json"))
        .unwrap();
    let response = app.clone().oneshot(request).await.unwrap();
    assert_eq!(response.status(), StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn exhausted_suggestions_arrive_with_a_notice() {
    let schemas = Schemas::load();
    let (state, _) = app_state(Duration::ZERO, None);
    let app = router(state);
    let id = new_session(&app).await;
    let (status, body) = suggest(&app, &id, json!({"step": "synonyms", "inputs": ["blue"]})).await;
    assert_eq!(status, StatusCode::OK);
    schemas.api("SuggestResponse", &body).unwrap();
    assert_eq!(body["items"].as_array().unwrap().len(), 7);
    assert_eq!(body["exhausted"], true);
    assert_eq!(body["notice"]["code"], "exhausted_suggestions");
}

#[tokio::test]
async fn more_suggestions_are_fresh() {
    let (state, backend) = app_state(Duration::ZERO, None);
    let app = router(state);
    let id = new_session(&app).await;
    let (_, first) = suggest(&app, &id, json!({"step": "environment", "min_count": 4})).await;
    let first: Vec<Value> = first["items"].as_array().unwrap().clone();
    let (_, again) = suggest(&app, &id, json!({"step": "environment", "min_count": 4})).await;
    assert_eq!(again["items"].as_array().unwrap(), &first, "same query is served from the cache");
    let calls = backend.calls();
    let (_, more) = suggest(&app, &id, json!({"step": "environment", "min_count": 4, "exclude": first})).await;
    let more = more["items"].as_array().unwrap();
    assert_eq!(more.len(), 4);
    assert!(more.iter().all(|m| !first.contains(m)));
    assert!(backend.calls() > calls);
}

#[tokio::test]
async fn concurrent_actions_on_one_session_serialize() {
    let (state, _) = app_state(Duration::ZERO, None);
    let app = router(state);
    let id = new_session(&app).await;
    act(&app, &id, json!({"kind": "accept", "payload": "park"})).await;

    let mut tasks = Vec::new();
    for n in 0..40 {
        let app = app.clone();
        let id = id.clone();
        tasks.push(tokio::spawn(async move {
            act(&app, &id, json!({"kind": "accept", "payload": format!("thing {n}"), "advance": false})).await
        }));
    }
    for t in tasks {
        assert_eq!(t.await.unwrap().0, StatusCode::OK);
    }
    let session = snapshot(&app, &id).await;
    assert_eq!(session["subjects"].as_array().unwrap().len(), 40);
    let seqs: Vec<u64> = session["events"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["seq"].as_u64().unwrap())
        .collect();
    assert_eq!(seqs, (0..=40).collect::<Vec<_>>());
}

#[tokio::test]
async fn dropped_suggest_request_leaves_state_untouched() {
    let (state, _) = app_state(Duration::from_millis(300), None);
    let app = router(state);
    let id = new_session(&app).await;
    act(&app, &id, json!({"kind": "accept", "payload": "park"})).await;
    let before = snapshot(&app, &id).await;

    let pending = suggest(&app, &id, json!({"step": "subjects"}));
    assert!(tokio::time::timeout(Duration::from_millis(30), pending).await.is_err());
    assert_eq!(snapshot(&app, &id).await, before);

    // no attempt cursor moved: the retry gets the first recorded completion
    let (status, body) = suggest(&app, &id, json!({"step": "subjects"})).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["items"][0], "tree");
    assert_eq!(body["attempts_used"], 1);
}

#[tokio::test]
async fn sessions_survive_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let (state, _) = app_state(Duration::ZERO, Some(SessionStore::new(dir.path())));
    let app = router(state);
    let (id, _) = park_over_api(&app).await;
    let saved = snapshot(&app, &id).await;

    let schemas = Schemas::load();
    let record: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join(format!("{id}.json"))).unwrap())
        .unwrap();
    schemas.record(&record).unwrap();

    let (state, _) = app_state(Duration::ZERO, Some(SessionStore::new(dir.path())));
    let app = router(state);
    assert_eq!(snapshot(&app, &id).await, saved);
    let (_, list) = call(&app, Method::GET, "/sessions", None).await;
    assert_eq!(list[0]["id"], id.as_str());
}

#[tokio::test]
async fn healthz_and_cors() {
    let schemas = Schemas::load();
    let (state, _) = app_state(Duration::ZERO, None);
    let app = router(state);
    let (status, body) = call(&app, Method::GET, "/healthz", None).await;
    assert_eq!(status, StatusCode::OK);
    schemas.api("Health", &body).unwrap();
    assert_eq!(body["mode"], "fixture");
    assert_eq!(body["backend_reachable"], true);

    let preflight = Request::builder()
        .method(Method::OPTIONS)
        .uri("/sessions")
        .header("origin", "http://localhost:5173")
        .header("access-control-request-method", "POST")
        .body(Body::empty())
        .unwrap();
    let response = app.clone().oneshot(preflight).await.unwrap();
    assert_eq!(
        response.headers().get("access-control-allow-origin").unwrap(),
        "http://localhost:5173"
    );
}

#[test]
fn every_error_maps_to_a_documented_code_and_sentence() {
    let schemas = Schemas::load();
    let errors = vec![
        AppError::Wizard(WizardError::WrongStep {
            expected: Step::Scene,
            current: Step::Style,
        }),
        AppError::Wizard(WizardError::Finished),
        AppError::Wizard(WizardError::SkipNotAllowed),
        AppError::Wizard(WizardError::EmptyPayload),
        AppError::Wizard(WizardError::NoScene),
        AppError::Wizard(WizardError::EmptyPrompt),
        AppError::Wizard(WizardError::NoSceneWords),
        AppError::Wizard(WizardError::WordNotFound { word: "tree".into() }),
        AppError::Wizard(WizardError::InconsistentEvent {
            seq: 3,
            reason: "x".into(),
        }),
        AppError::Suggest(SuggestError::InvalidQuery("bad".into())),
        AppError::Suggest(SuggestError::Cancelled),
        AppError::Suggest(SuggestError::NoSuggestions),
        AppError::Suggest(SuggestError::Backend(LlmError::Timeout)),
        AppError::Suggest(SuggestError::Backend(LlmError::BackendUnavailable("refused".into()))),
        AppError::Suggest(SuggestError::Backend(LlmError::MissingFixture { key: "k".into() })),
        AppError::Suggest(SuggestError::Backend(LlmError::RecordingDisabled)),
        AppError::Suggest(SuggestError::Backend(LlmError::InvalidRequest("x".into()))),
        AppError::Store(StoreError::NotFound(promptassist::wizard::SessionId(uuid::Uuid::nil()))),
        AppError::Store(StoreError::StorageFull),
        AppError::Store(StoreError::SchemaMismatch { found: 9 }),
        AppError::Store(StoreError::Io("x".into())),
        AppError::NotFound("x".into()),
        AppError::InvalidRequest("x".into()),
        AppError::Internal("x".into()),
    ];
    for err in &errors {
        for mode in [BackendMode::Fixture, BackendMode::Live, BackendMode::Record] {
            let (status, api) = error_mapping(err, mode);
            assert!(status.is_client_error() || status.is_server_error(), "{err:?}");
            schemas
                .api("ApiError", &serde_json::to_value(&api).unwrap())
                .unwrap();
            assert!(api.message.ends_with('.'), "{}", api.message);
            assert!(api.message.chars().next().unwrap().is_uppercase(), "{}", api.message);
        }
    }
    let timeout = AppError::Suggest(SuggestError::Backend(LlmError::Timeout));
    assert!(error_mapping(&timeout, BackendMode::Live).1.retriable);
    let missing = AppError::Suggest(SuggestError::Backend(LlmError::MissingFixture { key: "k".into() }));
    assert_eq!(error_mapping(&missing, BackendMode::Fixture).1.code, "missing_fixture");
    assert_eq!(error_mapping(&missing, BackendMode::Live).1.code, "backend_unavailable");
}

//! Starts the HTTP API on a free port and walks a session through it.

use std::path::Path;
use std::sync::Arc;

use promptassist::api::{self, AppState};
use promptassist::config::{BackendMode, Config};
use serde_json::{Value, json};

/// Returns the `/prompt` response body.
pub async fn run_example() -> Result<Value, Box<dyn std::error::Error>> {
    let config = Config {
        backend_mode: BackendMode::Fixture,
        fixture_path: Some(Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/sample.json")),
        deterministic: true,
        ..Config::default()
    };
    let state = Arc::new(AppState::from_config(&config)?);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
    let base = format!("http://{}", listener.local_addr()?);
    let server = tokio::spawn(async move { axum::serve(listener, api::app(state, None).expect("no origin")).await });

    let http = reqwest::Client::new();
    let session: Value = http.post(format!("{base}/sessions")).send().await?.json().await?;
    let id = session["id"].as_str().ok_or("session without id")?.to_string();
    let at = |path: &str| format!("{base}/sessions/{id}/{path}");

    let env: Value = http.post(at("suggest")).json(&json!({"step": "environment"})).send().await?.json().await?;
    println!("environments: {}", env["items"]);
    let first = env["items"][0].clone();
    http.post(at("action")).json(&json!({"kind": "accept", "payload": first})).send().await?;

    let subjects: Value = http.post(at("suggest")).json(&json!({"step": "subjects"})).send().await?.json().await?;
    println!("subjects: {}", subjects["items"]);
    for (word, advance) in [("tree", false), ("bench", true)] {
        http.post(at("action"))
            .json(&json!({"kind": "accept", "payload": word, "advance": advance}))
            .send()
            .await?;
    }
    http.post(at("action")).json(&json!({"kind": "skip"})).send().await?;

    let scenes: Value = http.post(at("suggest")).json(&json!({"step": "scene"})).send().await?.json().await?;
    http.post(at("action"))
        .json(&json!({"kind": "accept", "payload": scenes["items"][0]}))
        .send()
        .await?;

    // a mistake: the scene step is over, so this is refused and changes nothing
    let refused = http.post(at("action")).json(&json!({"kind": "skip", "step": "scene"})).send().await?;
    println!("{} {}", refused.status(), refused.text().await?);

    http.post(at("action"))
        .json(&json!({"kind": "accept", "payload": "oil painting"}))
        .send()
        .await?;
    let prompt: Value = http.get(at("prompt")).send().await?.json().await?;
    server.abort();
    Ok(prompt)
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let prompt = run_example().await?;
    println!("{}", serde_json::to_string_pretty(&prompt)?);
    Ok(())
}

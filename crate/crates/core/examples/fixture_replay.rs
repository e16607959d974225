//! Replays recorded completions, then shows a missing fixture, a timeout and
//! a cancelled generation.

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use promptassist::llm::{FinishReason, FixtureBackend, FixtureStore, GenerationRequest, LlmClient, LlmError};
use promptassist::templates::{TemplateId, TemplateRegistry};
use tokio_util::sync::CancellationToken;

#[derive(Debug)]
pub struct Outcomes {
    pub replayed: String,
    pub missing: LlmError,
    pub timed_out: FinishReason,
    pub cancelled: FinishReason,
}

pub async fn run_example() -> Result<Outcomes, LlmError> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/sample.json");
    let store = Arc::new(FixtureStore::load(&path)?);
    let templates = TemplateRegistry::builtin();
    let template = templates.get(TemplateId::SubjectsForEnvironment);
    let request = |input: &str| -> GenerationRequest {
        let prompt = template.render(&[input]).expect("single-line input renders");
        GenerationRequest::new(prompt.text, template.stop_sequences().to_vec())
    };

    let client = LlmClient::new(Arc::new(FixtureBackend::new(store.clone())));
    let none = CancellationToken::new();
    let replayed = client.generate(&request("sea"), &none).await?.text;
    let missing = client
        .generate(&request("volcano"), &none)
        .await
        .expect_err("nothing was recorded for volcano");

    let slow = Arc::new(FixtureBackend::new(store).with_latency(Duration::from_millis(200)));
    let impatient = LlmClient::new(slow.clone()).with_timeout(Duration::from_millis(20));
    let timed_out = impatient.generate(&request("sea"), &none).await?.finish_reason;

    let cancel = CancellationToken::new();
    let trigger = cancel.clone();
    tokio::spawn(async move {
        tokio::time::sleep(Duration::from_millis(10)).await;
        trigger.cancel();
    });
    let cancelled = LlmClient::new(slow).generate(&request("sea"), &cancel).await?;
    assert!(cancelled.text.is_empty());

    Ok(Outcomes {
        replayed,
        missing,
        timed_out,
        cancelled: cancelled.finish_reason,
    })
}

#[tokio::main]
async fn main() -> Result<(), LlmError> {
    let o = run_example().await?;
    println!("replayed: {:?}", o.replayed);
    println!("missing:  {}", o.missing);
    println!("timeout:  {:?}", o.timed_out);
    println!("cancel:   {:?}", o.cancelled);
    Ok(())
}

use std::sync::Arc;
use std::time::Instant;

use async_trait::async_trait;

use super::{
    Backend, BackendReply, Completion, FixtureStore, GenerationRequest, LlmError,
    finish, normalize_digest,
};

/// Forwards `request` to `live` and stores the (stop-truncated) text under
/// the request's digest and attempt tag, overwriting any previous entry.
pub async fn record(
    request: &GenerationRequest,
    live: &dyn Backend,
    store: &FixtureStore,
) -> Result<Completion, LlmError> {
    if !store.is_recording() {
        return Err(LlmError::RecordingDisabled);
    }
    request.validate()?;
    let started = Instant::now();
    let reply = live.complete(request).await?;
    let completion = finish(reply, request, live.id(), started.elapsed());
    store.insert(
        &normalize_digest(&request.prompt_text),
        request.attempt_tag,
        completion.text.clone(),
    );
    Ok(completion)
}

/// A backend that records everything a live backend answers.
pub struct RecordingBackend {
    live: Arc<dyn Backend>,
    store: Arc<FixtureStore>,
}

impl RecordingBackend {
    pub fn new(live: Arc<dyn Backend>, store: Arc<FixtureStore>) -> Result<Self, LlmError> {
        if !store.is_recording() {
            return Err(LlmError::RecordingDisabled);
        }
        Ok(Self { live, store })
    }

    pub fn store(&self) -> &Arc<FixtureStore> {
        &self.store
    }
}

#[async_trait]
impl Backend for RecordingBackend {
    fn id(&self) -> &str {
        "record"
    }

    async fn complete(&self, request: &GenerationRequest) -> Result<BackendReply, LlmError> {
        let completion = record(request, self.live.as_ref(), &self.store).await?;
        Ok(BackendReply {
            text: completion.text,
            finish_reason: Some(completion.finish_reason),
        })
    }

    async fn healthy(&self) -> bool {
        self.live.healthy().await
    }
}

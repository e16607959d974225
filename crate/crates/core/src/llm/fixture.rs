use std::collections::BTreeMap;
use std::path::Path;
use std::sync::RwLock;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use super::{Backend, BackendReply, GenerationRequest, LlmError, PromptDigest, normalize_digest};
use crate::fsutil;
use crate::templates::{TemplateId, TemplateRegistry};

/// Key under which a completion is stored: `"<digest>:<attempt_tag>"`.
pub fn fixture_key(digest: &PromptDigest, attempt_tag: u32) -> String {
    format!("{digest}:{attempt_tag}")
}

/// Recorded completions keyed by prompt digest and attempt tag.
///
/// On disk this is a flat JSON object from key to completion text, with
/// keys sorted so that identical stores serialize identically.
#[derive(Debug, Default)]
pub struct FixtureStore {
    entries: RwLock<BTreeMap<String, String>>,
    recording: bool,
}

impl FixtureStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn recording() -> Self {
        Self {
            entries: RwLock::default(),
            recording: true,
        }
    }

    pub fn set_recording(&mut self, recording: bool) {
        self.recording = recording;
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn from_json(text: &str) -> Result<Self, LlmError> {
        let entries: BTreeMap<String, String> =
            serde_json::from_str(text).map_err(|e| LlmError::Fixture(e.to_string()))?;
        Ok(Self {
            entries: RwLock::new(entries),
            recording: false,
        })
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Fixture(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Pretty JSON, LF newlines, trailing newline.
    pub fn to_json(&self) -> String {
        let entries = self.entries.read().expect("fixture lock poisoned");
        let mut text = serde_json::to_string_pretty(&*entries).expect("string map serializes");
        text.push('\n');
        text
    }

    pub fn save(&self, path: &Path) -> Result<(), LlmError> {
        fsutil::write_bytes_atomically(path, self.to_json().as_bytes())
            .map_err(|e| LlmError::Fixture(format!("{}: {e}", path.display())))
    }

    pub fn get(&self, digest: &PromptDigest, attempt_tag: u32) -> Option<String> {
        self.entries
            .read()
            .expect("fixture lock poisoned")
            .get(&fixture_key(digest, attempt_tag))
            .cloned()
    }

    pub fn insert(&self, digest: &PromptDigest, attempt_tag: u32, text: impl Into<String>) {
        self.entries
            .write()
            .expect("fixture lock poisoned")
            .insert(fixture_key(digest, attempt_tag), text.into());
    }

    pub fn insert_prompt(&self, prompt_text: &str, attempt_tag: u32, text: impl Into<String>) {
        self.insert(&normalize_digest(prompt_text), attempt_tag, text);
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("fixture lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Builds a store from a human-readable authoring document by rendering
    /// each entry's template with its inputs.
    pub fn from_authoring(
        templates: &TemplateRegistry,
        authoring: &FixtureAuthoring,
    ) -> Result<Self, LlmError> {
        let store = Self::new();
        for (n, entry) in authoring.entry.iter().enumerate() {
            let rendered = templates
                .get(entry.template)
                .render(&entry.inputs)
                .map_err(|e| LlmError::Fixture(format!("authoring entry {}: {e}", n + 1)))?;
            store.insert_prompt(&rendered.text, entry.attempt, entry.completion.clone());
        }
        Ok(store)
    }
}

/// TOML document listing completions by template and inputs.
///
/// ```toml
/// [[entry]]
/// template = "subjects_for_environment"
/// inputs = ["school"]
/// attempt = 0
/// completion = " blackboard, teacher, chair"
/// ```
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureAuthoring {
    #[serde(default)]
    pub entry: Vec<AuthoredFixture>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthoredFixture {
    pub template: TemplateId,
    #[serde(default)]
    pub inputs: Vec<String>,
    #[serde(default)]
    pub attempt: u32,
    pub completion: String,
}

impl FixtureAuthoring {
    pub fn from_toml(text: &str) -> Result<Self, LlmError> {
        toml::from_str(text).map_err(|e| LlmError::Fixture(e.to_string()))
    }
}

/// Replays completions from a [`FixtureStore`].
#[derive(Debug)]
pub struct FixtureBackend {
    store: Arc<FixtureStore>,
    latency: Duration,
    calls: AtomicUsize,
}

impl FixtureBackend {
    pub fn new(store: Arc<FixtureStore>) -> Self {
        Self {
            store,
            latency: Duration::ZERO,
            calls: AtomicUsize::new(0),
        }
    }

    /// Delays every reply, to exercise cancellation and timeouts.
    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }

    pub fn store(&self) -> &Arc<FixtureStore> {
        &self.store
    }

    /// Number of completions requested so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

#[async_trait]
impl Backend for FixtureBackend {
    fn id(&self) -> &str {
        "fixture"
    }

    async fn complete(&self, request: &GenerationRequest) -> Result<BackendReply, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if !self.latency.is_zero() {
            tokio::time::sleep(self.latency).await;
        }
        let digest = normalize_digest(&request.prompt_text);
        self.store
            .get(&digest, request.attempt_tag)
            .map(BackendReply::text)
            .ok_or_else(|| LlmError::MissingFixture {
                key: fixture_key(&digest, request.attempt_tag),
            })
    }
}

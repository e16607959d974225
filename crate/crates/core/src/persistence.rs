//! Session storage: one JSON record per session in a directory.
//!
//! The event log inside a record is authoritative. Loading replays it and
//! rejects records whose stored snapshot disagrees with the replay.

use std::fs;
use std::io::{self, ErrorKind, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::BackendMode;
use crate::fsutil;
use crate::wizard::{AssemblyOptions, Session, SessionId};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("session {0} not found")]
    NotFound(SessionId),
    #[error("record schema version {found} is not supported (newest known is {SCHEMA_VERSION})")]
    SchemaMismatch { found: u64 },
    #[error("session record is corrupt: {0}")]
    CorruptRecord(String),
    #[error("storage is full")]
    StorageFull,
    #[error("session could not be serialized: {0}")]
    SerializationFailure(String),
    #[error("storage error: {0}")]
    Io(String),
}

impl From<io::Error> for StoreError {
    fn from(e: io::Error) -> Self {
        match e.kind() {
            ErrorKind::StorageFull | ErrorKind::QuotaExceeded => StoreError::StorageFull,
            _ => StoreError::Io(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendMeta {
    pub mode: BackendMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend_url: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub schema_version: u32,
    pub session: Session,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend: Option<BackendMeta>,
}

impl SessionRecord {
    pub fn new(session: Session, backend: Option<BackendMeta>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            session,
            backend,
        }
    }

    /// Pretty JSON with LF newlines and a trailing newline.
    pub fn to_json(&self) -> Result<String, StoreError> {
        let mut text =
            serde_json::to_string_pretty(self).map_err(|e| StoreError::SerializationFailure(e.to_string()))?;
        text.push('\n');
        Ok(text)
    }

    /// Parses a record and rebuilds its session by replay.
    pub fn from_json(text: &str) -> Result<Self, StoreError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| StoreError::CorruptRecord(e.to_string()))?;
        let found = value
            .get("schema_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| StoreError::CorruptRecord("missing schema_version".into()))?;
        if found == 0 || found > u64::from(SCHEMA_VERSION) {
            return Err(StoreError::SchemaMismatch { found });
        }
        let record: SessionRecord =
            serde_json::from_value(value).map_err(|e| StoreError::CorruptRecord(e.to_string()))?;
        let snapshot = &record.session;
        let replayed = Session::replay(snapshot.id(), snapshot.created(), snapshot.events().to_vec())
            .map_err(|e| StoreError::CorruptRecord(e.to_string()))?;
        if &replayed != snapshot {
            return Err(StoreError::CorruptRecord(
                "stored snapshot disagrees with its event log".into(),
            ));
        }
        replayed.check_invariants().map_err(StoreError::CorruptRecord)?;
        Ok(SessionRecord {
            session: replayed,
            ..record
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub id: SessionId,
    pub updated: DateTime<Utc>,
    /// The prompt as it would assemble now; empty without a scene.
    pub preview: String,
}

#[derive(Debug, Clone)]
pub struct SessionStore {
    dir: PathBuf,
    assembly: AssemblyOptions,
}

impl SessionStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: dir.into(),
            assembly: AssemblyOptions::default(),
        }
    }

    pub fn with_assembly(mut self, assembly: AssemblyOptions) -> Self {
        self.assembly = assembly;
        self
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, id: SessionId) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }

    pub fn save(&self, session: &Session, backend: Option<BackendMeta>) -> Result<PathBuf, StoreError> {
        let text = SessionRecord::new(session.clone(), backend).to_json()?;
        self.write_record(session.id(), |f| f.write_all(text.as_bytes()))
    }

    fn write_record(
        &self,
        id: SessionId,
        fill: impl FnOnce(&mut fs::File) -> io::Result<()>,
    ) -> Result<PathBuf, StoreError> {
        let path = self.path_for(id);
        fsutil::write_atomically(&path, fill)?;
        Ok(path)
    }

    pub fn load_record(&self, id: SessionId) -> Result<SessionRecord, StoreError> {
        let text = match fs::read_to_string(self.path_for(id)) {
            Ok(text) => text,
            Err(e) if e.kind() == ErrorKind::NotFound => return Err(StoreError::NotFound(id)),
            Err(e) if e.kind() == ErrorKind::InvalidData => return Err(StoreError::CorruptRecord(e.to_string())),
            Err(e) => return Err(e.into()),
        };
        let record = SessionRecord::from_json(&text)?;
        if record.session.id() != id {
            return Err(StoreError::CorruptRecord(format!(
                "file for {id} holds session {}",
                record.session.id()
            )));
        }
        Ok(record)
    }

    pub fn load(&self, id: SessionId) -> Result<Session, StoreError> {
        self.load_record(id).map(|r| r.session)
    }

    /// Summaries of every readable record, most recently updated first.
    /// Unreadable or half-written files are skipped.
    pub fn list_sessions(&self) -> Result<Vec<SessionSummary>, StoreError> {
        let entries = match fs::read_dir(&self.dir) {
            Ok(entries) => entries,
            Err(e) if e.kind() == ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        let mut summaries = Vec::new();
        for entry in entries.flatten() {
            let path = entry.path();
            let Some(id) = path
                .file_name()
                .and_then(|n| n.to_str())
                .and_then(|n| n.strip_suffix(".json"))
                .and_then(|stem| stem.parse::<SessionId>().ok())
            else {
                continue;
            };
            match self.load(id) {
                Ok(session) => summaries.push(SessionSummary {
                    id,
                    updated: session.updated(),
                    preview: session.preview(self.assembly).unwrap_or_default(),
                }),
                Err(e) => tracing::warn!(path = %path.display(), error = %e, "skipping session record"),
            }
        }
        summaries.sort_by(|a, b| b.updated.cmp(&a.updated).then(a.id.cmp(&b.id)));
        Ok(summaries)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::{Clock, SteppingClock};
    use crate::wizard::{Action, Step};
    use uuid::Uuid;

    const PARK_SCENE: &str = "A young man is sitting on a bench near a small tree. He is wearing a green pullover";

    fn park_session(n: u128, clock: &SteppingClock) -> Session {
        let mut s = Session::new(SessionId(Uuid::from_u128(n)), clock.now());
        let accept = |step, text: &str, advance| Action::Accept {
            step,
            text: text.into(),
            advance,
        };
        for a in [
            accept(Step::Environment, "park", true),
            accept(Step::Subjects, "tree", false),
            accept(Step::Subjects, "bench", true),
            Action::Skip { step: Step::Actions },
            accept(Step::Scene, PARK_SCENE, true),
            accept(Step::Style, "oil painting", true),
        ] {
            s.apply(a, clock.now()).unwrap();
        }
        s
    }

    #[test]
    fn fresh_session_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let store = SessionStore::new(dir.path());
        let s = Session::new(SessionId(Uuid::from_u128(1)), SteppingClock::default().now());
        let path = store.save(&s, None).unwrap();
        assert!(path.exists());
        assert_eq!(store.load(s.id()).unwrap(), s);
        let text = fs::read_to_string(path).unwrap();
        assert!(text.ends_with("}\n") && !text.contains('\r'));
    }

    #[test]
    fn walkthrough_reloads_to_the_same_prompt() {
        let dir = tempfile::tempdir().unwrap();
        let store = SessionStore::new(dir.path());
        let clock = SteppingClock::default();
        let s = park_session(2, &clock);
        store
            .save(
                &s,
                Some(BackendMeta {
                    mode: BackendMode::Fixture,
                    fixture_path: Some("fixtures/sample.json".into()),
                    backend_url: None,
                }),
            )
            .unwrap();
        let mut loaded = store.load(s.id()).unwrap();
        let prompt = loaded.assemble(AssemblyOptions::default(), clock.now()).unwrap();
        assert_eq!(
            prompt.text,
            "A young man is sitting on a bench near a small tree. He is wearing a green pullover, oil painting"
        );
        assert_eq!(store.load_record(s.id()).unwrap().backend.unwrap().mode, BackendMode::Fixture);
    }

    #[test]
    fn interrupted_save_keeps_prior_record() {
        let dir = tempfile::tempdir().unwrap();
        let store = SessionStore::new(dir.path());
        let clock = SteppingClock::default();
        let s = park_session(3, &clock);
        store.save(&s, None).unwrap();
        let err = store
            .write_record(s.id(), |f| {
                f.write_all(b"{\"schema_version\": 1, \"sess")?;
                Err(io::Error::other("killed"))
            })
            .unwrap_err();
        assert!(matches!(err, StoreError::Io(_)));
        assert_eq!(store.load(s.id()).unwrap(), s);
        assert_eq!(store.list_sessions().unwrap().len(), 1);
    }

    #[test]
    fn missing_truncated_and_future_records() {
        let dir = tempfile::tempdir().unwrap();
        let store = SessionStore::new(dir.path());
        let unknown = SessionId(Uuid::from_u128(99));
        assert!(matches!(store.load(unknown), Err(StoreError::NotFound(id)) if id == unknown));

        let clock = SteppingClock::default();
        let s = park_session(4, &clock);
        let path = store.save(&s, None).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        fs::write(&path, &text[..text.len() / 2]).unwrap();
        assert!(matches!(store.load(s.id()), Err(StoreError::CorruptRecord(_))));

        fs::write(&path, text.replacen("\"schema_version\": 1", "\"schema_version\": 7", 1)).unwrap();
        assert!(matches!(store.load(s.id()), Err(StoreError::SchemaMismatch { found: 7 })));

        // snapshot edited behind the log's back
        fs::write(&path, text.replacen("\"environment\": \"park\"", "\"environment\": \"zoo\"", 1)).unwrap();
        assert!(matches!(store.load(s.id()), Err(StoreError::CorruptRecord(_))));
    }

    #[test]
    fn listing_sorted_newest_first_with_previews() {
        let dir = tempfile::tempdir().unwrap();
        let store = SessionStore::new(dir.path().join("sessions"));
        assert!(store.list_sessions().unwrap().is_empty());

        let clock = SteppingClock::default();
        let done = park_session(5, &clock);
        let blank = Session::new(SessionId(Uuid::from_u128(6)), clock.now());
        store.save(&done, None).unwrap();
        store.save(&blank, None).unwrap();
        fs::write(store.dir().join("notes.txt"), "ignore me").unwrap();

        let list = store.list_sessions().unwrap();
        assert_eq!(list.len(), 2);
        assert_eq!(list[0].id, blank.id());
        assert_eq!(list[0].preview, "");
        assert_eq!(list[1].id, done.id());
        assert!(list[1].preview.ends_with("green pullover, oil painting"));
    }
}

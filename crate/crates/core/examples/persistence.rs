//! Saves a session, lists it and loads it back by replaying its events.

use chrono::{DateTime, Utc};
use promptassist::persistence::{SessionStore, SessionSummary, StoreError};
use promptassist::wizard::{Action, AssemblyOptions, Session, SessionId, Step};
use uuid::Uuid;

pub fn run_example() -> Result<(Vec<SessionSummary>, String), StoreError> {
    let dir = tempfile::tempdir().map_err(|e| StoreError::Io(e.to_string()))?;
    let store = SessionStore::new(dir.path());
    let t0 = DateTime::<Utc>::from_timestamp(1_704_067_200, 0).expect("valid timestamp");

    let mut session = Session::new(SessionId(Uuid::from_u128(7)), t0);
    for text in ["beach", "dog"] {
        let step = session.step();
        session
            .apply(Action::Type { step, text: text.into(), advance: true }, t0)
            .expect("valid step");
    }
    session.apply(Action::Skip { step: Step::Actions }, t0).expect("actions can be skipped");
    session
        .apply(
            Action::Type {
                step: Step::Scene,
                text: "A dog is digging a hole in the sand".into(),
                advance: true,
            },
            t0,
        )
        .expect("valid scene");
    let path = store.save(&session, None)?;
    println!("saved {}", path.display());

    let loaded = store.load(session.id())?;
    assert!(loaded.same_state(&session));
    let prompt = loaded.preview(AssemblyOptions::default()).unwrap_or_default();
    Ok((store.list_sessions()?, prompt))
}

fn main() -> Result<(), StoreError> {
    let (summaries, prompt) = run_example()?;
    for s in &summaries {
        println!("{} updated {} {:?}", s.id, s.updated, s.preview);
    }
    println!("reloaded prompt: {prompt}");
    Ok(())
}

//! The five-step prompt wizard as an event-sourced state machine.
//!
//! Every user action becomes an [`InteractionEvent`]; the session's fields
//! are a pure fold over its events, so a session loaded from disk is rebuilt
//! by replaying them.

mod effort;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

pub use effort::{EffortReport, inserted_chars, savings_ratio};

use crate::parser::normalize_key;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SessionId(pub Uuid);

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl FromStr for SessionId {
    type Err = uuid::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Uuid::parse_str(s).map(SessionId)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    Environment,
    Subjects,
    Actions,
    Scene,
    Style,
    Done,
}

impl Step {
    pub const ALL: [Step; 6] = [
        Step::Environment,
        Step::Subjects,
        Step::Actions,
        Step::Scene,
        Step::Style,
        Step::Done,
    ];

    pub fn next(self) -> Step {
        match self {
            Step::Environment => Step::Subjects,
            Step::Subjects => Step::Actions,
            Step::Actions => Step::Scene,
            Step::Scene => Step::Style,
            Step::Style | Step::Done => Step::Done,
        }
    }

    pub fn prev(self) -> Step {
        match self {
            Step::Environment | Step::Subjects => Step::Environment,
            Step::Actions => Step::Subjects,
            Step::Scene => Step::Actions,
            Step::Style => Step::Scene,
            Step::Done => Step::Style,
        }
    }

    /// Steps that collect a list instead of a single value.
    pub fn is_multi_select(self) -> bool {
        matches!(self, Step::Subjects | Step::Actions)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Step::Environment => "environment",
            Step::Subjects => "subjects",
            Step::Actions => "actions",
            Step::Scene => "scene",
            Step::Style => "style",
            Step::Done => "done",
        }
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Step {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Step::ALL
            .into_iter()
            .find(|step| step.as_str() == s)
            .ok_or_else(|| format!("unknown step `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Typed,
    AcceptedSuggestion,
    EditedSuggestion,
    Skipped,
    WentBack,
    Restarted,
    ReplacedWord,
    Assembled,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionEvent {
    pub seq: u64,
    pub at: DateTime<Utc>,
    pub kind: EventKind,
    /// Step the session was on when the event happened.
    pub step: Step,
    pub payload: String,
    /// Suggestion text before an edit, or the word a replacement targets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default)]
    pub advance: bool,
    pub keystroke_count: u32,
    pub pointer_actions: u32,
}

impl InteractionEvent {
    fn check_counters(&self) -> Result<(), &'static str> {
        let chars = self.payload.chars().count() as u32;
        let ok = match self.kind {
            EventKind::Typed => self.keystroke_count == chars,
            EventKind::AcceptedSuggestion => self.keystroke_count == 0 && self.pointer_actions == 1,
            EventKind::EditedSuggestion => match &self.source {
                Some(original) => {
                    self.keystroke_count == inserted_chars(original, &self.payload)
                        && self.pointer_actions == 1
                }
                None => false,
            },
            EventKind::ReplacedWord => {
                self.source.is_some() && self.keystroke_count == 0 && self.pointer_actions == 2
            }
            EventKind::Skipped | EventKind::WentBack | EventKind::Restarted | EventKind::Assembled => {
                self.keystroke_count == 0
            }
        };
        if ok { Ok(()) } else { Err("effort counters do not match the event") }
    }
}

/// A user action on the wizard.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Action {
    Type { step: Step, text: String, advance: bool },
    Accept { step: Step, text: String, advance: bool },
    Edit { step: Step, original: String, edited: String, advance: bool },
    Skip { step: Step },
    Back,
    Restart,
    ReplaceWord { target: String, replacement: String },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WizardError {
    #[error("the action targets the {expected} step but the wizard is on {current}")]
    WrongStep { expected: Step, current: Step },
    #[error("the wizard is finished")]
    Finished,
    #[error("the scene step cannot be skipped")]
    SkipNotAllowed,
    #[error("the text is empty")]
    EmptyPayload,
    #[error("there is no scene yet")]
    NoScene,
    #[error("`{word}` does not occur in the scene as a whole word")]
    WordNotFound { word: String },
    #[error("the prompt has no scene")]
    EmptyPrompt,
    #[error("there are no subjects, actions or environment to build a scene from")]
    NoSceneWords,
    #[error("event {seq} is inconsistent: {reason}")]
    InconsistentEvent { seq: u64, reason: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssemblyOptions {
    /// End the prompt with a period when it lacks terminal punctuation.
    #[serde(default)]
    pub terminal_period: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssembledPrompt {
    pub text: String,
    pub char_count: u64,
    pub effort: EffortReport,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct WizardState {
    step: Step,
    environment: Option<String>,
    subjects: Vec<String>,
    actions: Vec<String>,
    scene: Option<String>,
    style: Option<String>,
}

impl Default for WizardState {
    fn default() -> Self {
        Self {
            step: Step::Environment,
            environment: None,
            subjects: Vec::new(),
            actions: Vec::new(),
            scene: None,
            style: None,
        }
    }
}

fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn push_unique(list: &mut Vec<String>, value: String) {
    let key = normalize_key(&value);
    if !list.iter().any(|v| normalize_key(v) == key) {
        list.push(value);
    }
}

/// Byte offset of the first whole-word occurrence of `word` in `text`.
fn find_whole_word(text: &str, word: &str) -> Option<usize> {
    if word.is_empty() {
        return None;
    }
    text.match_indices(word).map(|(at, _)| at).find(|&at| {
        let before = text[..at].chars().next_back();
        let after = text[at + word.len()..].chars().next();
        !before.is_some_and(char::is_alphanumeric) && !after.is_some_and(char::is_alphanumeric)
    })
}

impl WizardState {
    fn transition(&self, ev: &InteractionEvent) -> Result<WizardState, WizardError> {
        let mut next = self.clone();
        let content_event = matches!(
            ev.kind,
            EventKind::Typed | EventKind::AcceptedSuggestion | EventKind::EditedSuggestion | EventKind::Skipped
        );
        if content_event {
            if ev.step != self.step {
                return Err(WizardError::WrongStep {
                    expected: ev.step,
                    current: self.step,
                });
            }
            if self.step == Step::Done {
                return Err(WizardError::Finished);
            }
        } else if ev.step != self.step {
            return Err(WizardError::InconsistentEvent {
                seq: ev.seq,
                reason: format!("recorded on {} while the wizard was on {}", ev.step, self.step),
            });
        }

        match ev.kind {
            EventKind::Typed | EventKind::AcceptedSuggestion | EventKind::EditedSuggestion => {
                let value = collapse_ws(&ev.payload);
                if value.is_empty() {
                    return Err(WizardError::EmptyPayload);
                }
                match self.step {
                    Step::Environment => next.environment = Some(value),
                    Step::Subjects => push_unique(&mut next.subjects, value),
                    Step::Actions => push_unique(&mut next.actions, value),
                    Step::Scene => next.scene = Some(value),
                    Step::Style => next.style = Some(value),
                    Step::Done => unreachable!("checked above"),
                }
                if ev.advance {
                    next.step = self.step.next();
                }
            }
            EventKind::Skipped => {
                match self.step {
                    Step::Environment => next.environment = None,
                    Step::Subjects => next.subjects.clear(),
                    Step::Actions => next.actions.clear(),
                    Step::Scene => return Err(WizardError::SkipNotAllowed),
                    Step::Style => next.style = None,
                    Step::Done => unreachable!("checked above"),
                }
                next.step = self.step.next();
            }
            EventKind::WentBack => next.step = self.step.prev(),
            EventKind::Restarted => next = WizardState::default(),
            EventKind::ReplacedWord => {
                let scene = self.scene.as_deref().ok_or(WizardError::NoScene)?;
                let target = ev.source.as_deref().unwrap_or_default();
                let replacement = collapse_ws(&ev.payload);
                if replacement.is_empty() {
                    return Err(WizardError::EmptyPayload);
                }
                let at = find_whole_word(scene, target).ok_or_else(|| WizardError::WordNotFound {
                    word: target.to_string(),
                })?;
                let mut replaced = String::with_capacity(scene.len() + replacement.len());
                replaced.push_str(&scene[..at]);
                replaced.push_str(&replacement);
                replaced.push_str(&scene[at + target.len()..]);
                next.scene = Some(replaced);
            }
            EventKind::Assembled => {
                if self.assemble_text(AssemblyOptions::default()).is_none() {
                    return Err(WizardError::EmptyPrompt);
                }
            }
        }
        Ok(next)
    }

    fn assemble_text(&self, options: AssemblyOptions) -> Option<String> {
        let scene = collapse_ws(self.scene.as_deref()?);
        let scene = scene.trim_end_matches(|c: char| c == ',' || c.is_whitespace());
        if scene.is_empty() {
            return None;
        }
        let style = self
            .style
            .as_deref()
            .map(collapse_ws)
            .map(|s| s.trim_matches(|c: char| c == ',' || c.is_whitespace()).to_string())
            .filter(|s| !s.is_empty());
        let mut text = match style {
            Some(style) => {
                let scene = scene.trim_end_matches(|c: char| ",.;:".contains(c) || c.is_whitespace());
                format!("{scene}, {style}")
            }
            None => scene.to_string(),
        };
        if options.terminal_period && !text.ends_with(['.', '!', '?']) {
            text.push('.');
        }
        Some(text)
    }
}

/// One user's pass through the wizard.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    id: SessionId,
    #[serde(flatten)]
    state: WizardState,
    events: Vec<InteractionEvent>,
    created: DateTime<Utc>,
    updated: DateTime<Utc>,
}

impl Session {
    pub fn new(id: SessionId, now: DateTime<Utc>) -> Self {
        Self {
            id,
            state: WizardState::default(),
            events: Vec::new(),
            created: now,
            updated: now,
        }
    }

    /// Rebuilds a session from its event log, validating every event.
    pub fn replay(
        id: SessionId,
        created: DateTime<Utc>,
        events: impl IntoIterator<Item = InteractionEvent>,
    ) -> Result<Self, WizardError> {
        let mut session = Self::new(id, created);
        for ev in events {
            session.apply_event(ev)?;
        }
        Ok(session)
    }

    pub fn id(&self) -> SessionId {
        self.id
    }

    pub fn step(&self) -> Step {
        self.state.step
    }

    pub fn environment(&self) -> Option<&str> {
        self.state.environment.as_deref()
    }

    pub fn subjects(&self) -> &[String] {
        &self.state.subjects
    }

    pub fn actions(&self) -> &[String] {
        &self.state.actions
    }

    pub fn scene(&self) -> Option<&str> {
        self.state.scene.as_deref()
    }

    pub fn style(&self) -> Option<&str> {
        self.state.style.as_deref()
    }

    pub fn events(&self) -> &[InteractionEvent] {
        &self.events
    }

    pub fn created(&self) -> DateTime<Utc> {
        self.created
    }

    pub fn updated(&self) -> DateTime<Utc> {
        self.updated
    }

    /// Whether the two sessions hold the same selections and step.
    pub fn same_state(&self, other: &Session) -> bool {
        self.state == other.state
    }

    /// Words for scene suggestions: subjects then actions, deduplicated;
    /// the environment alone when both are empty.
    pub fn scene_words(&self) -> Result<Vec<String>, WizardError> {
        let mut words = Vec::new();
        for w in self.state.subjects.iter().chain(&self.state.actions) {
            push_unique(&mut words, w.clone());
        }
        if words.is_empty() {
            if let Some(env) = &self.state.environment {
                words.push(env.clone());
            }
        }
        if words.is_empty() {
            Err(WizardError::NoSceneWords)
        } else {
            Ok(words)
        }
    }

    /// Applies `action`, leaving the session untouched on error.
    pub fn apply(&mut self, action: Action, now: DateTime<Utc>) -> Result<&InteractionEvent, WizardError> {
        let step = self.state.step;
        let base = InteractionEvent {
            seq: self.events.len() as u64,
            at: now,
            kind: EventKind::Restarted,
            step,
            payload: String::new(),
            source: None,
            advance: false,
            keystroke_count: 0,
            pointer_actions: 1,
        };
        let event = match action {
            Action::Type { step, text, advance } => InteractionEvent {
                kind: EventKind::Typed,
                step,
                keystroke_count: text.chars().count() as u32,
                pointer_actions: 0,
                payload: text,
                advance,
                ..base
            },
            Action::Accept { step, text, advance } => InteractionEvent {
                kind: EventKind::AcceptedSuggestion,
                step,
                payload: text,
                advance,
                ..base
            },
            Action::Edit {
                step,
                original,
                edited,
                advance,
            } => InteractionEvent {
                kind: EventKind::EditedSuggestion,
                step,
                keystroke_count: inserted_chars(&original, &edited),
                payload: edited,
                source: Some(original),
                advance,
                ..base
            },
            Action::Skip { step } => InteractionEvent {
                kind: EventKind::Skipped,
                step,
                advance: true,
                ..base
            },
            Action::Back => InteractionEvent {
                kind: EventKind::WentBack,
                ..base
            },
            Action::Restart => base,
            Action::ReplaceWord { target, replacement } => InteractionEvent {
                kind: EventKind::ReplacedWord,
                payload: replacement,
                source: Some(target),
                pointer_actions: 2,
                ..base
            },
        };
        self.apply_event(event)?;
        Ok(self.events.last().expect("event just appended"))
    }

    pub fn replace_word(
        &mut self,
        target: &str,
        replacement: &str,
        now: DateTime<Utc>,
    ) -> Result<&InteractionEvent, WizardError> {
        self.apply(
            Action::ReplaceWord {
                target: target.to_string(),
                replacement: replacement.to_string(),
            },
            now,
        )
    }

    /// Validates and appends one event. The session is unchanged on error.
    pub fn apply_event(&mut self, ev: InteractionEvent) -> Result<(), WizardError> {
        if ev.seq != self.events.len() as u64 {
            return Err(WizardError::InconsistentEvent {
                seq: ev.seq,
                reason: format!("expected sequence number {}", self.events.len()),
            });
        }
        if ev.at < self.updated {
            return Err(WizardError::InconsistentEvent {
                seq: ev.seq,
                reason: "timestamp goes backwards".into(),
            });
        }
        ev.check_counters().map_err(|reason| WizardError::InconsistentEvent {
            seq: ev.seq,
            reason: reason.into(),
        })?;
        let next = self.state.transition(&ev)?;
        self.state = next;
        self.updated = ev.at;
        self.events.push(ev);
        Ok(())
    }

    /// The prompt as it would currently assemble, without recording anything.
    pub fn preview(&self, options: AssemblyOptions) -> Option<String> {
        self.state.assemble_text(options)
    }

    /// Builds the final prompt and records an `assembled` event.
    pub fn assemble(&mut self, options: AssemblyOptions, now: DateTime<Utc>) -> Result<AssembledPrompt, WizardError> {
        let text = self.preview(options).ok_or(WizardError::EmptyPrompt)?;
        let ev = InteractionEvent {
            seq: self.events.len() as u64,
            at: now,
            kind: EventKind::Assembled,
            step: self.state.step,
            payload: text.clone(),
            source: None,
            advance: false,
            keystroke_count: 0,
            pointer_actions: 0,
        };
        self.apply_event(ev)?;
        let char_count = text.chars().count() as u64;
        Ok(AssembledPrompt {
            char_count,
            effort: EffortReport::from_events(&self.events, char_count),
            text,
        })
    }

    pub fn effort_report(&self, options: AssemblyOptions) -> EffortReport {
        let prompt_chars = self.preview(options).map_or(0, |t| t.chars().count() as u64);
        EffortReport::from_events(&self.events, prompt_chars)
    }

    /// Checks the structural invariants a valid session always satisfies.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.state.step == Step::Done && self.state.scene.is_none() {
            return Err("finished session without a scene".into());
        }
        for (n, ev) in self.events.iter().enumerate() {
            if ev.seq != n as u64 {
                return Err(format!("event {n} has sequence number {}", ev.seq));
            }
            ev.check_counters().map_err(|e| format!("event {n}: {e}"))?;
        }
        if self.events.windows(2).any(|w| w[0].at > w[1].at) {
            return Err("event timestamps are not ordered".into());
        }
        let mut seen = HashSet::new();
        if !self.state.subjects.iter().all(|s| seen.insert(normalize_key(s))) {
            return Err("duplicate subject".into());
        }
        if let Some(text) = self.preview(AssemblyOptions::default()) {
            if text.ends_with(',') || text.ends_with(char::is_whitespace) || text.contains(",  ") {
                return Err(format!("malformed prompt text {text:?}"));
            }
        }
        Ok(())
    }
}

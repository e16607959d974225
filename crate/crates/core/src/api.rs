//! HTTP+JSON service exposing the wizard and the suggestion engine.
//!
//! | route | purpose |
//! |---|---|
//! | `POST /sessions` | create a session (201) |
//! | `GET /sessions` | summaries, newest first |
//! | `GET /sessions/{id}` | session snapshot with event log |
//! | `POST /sessions/{id}/suggest` | suggestions for a step |
//! | `POST /sessions/{id}/action` | apply a wizard action |
//! | `GET /sessions/{id}/prompt` | assemble the prompt with its effort report |
//! | `GET /healthz` | backend reachability and mode |
//!
//! Every failure answers `{"error": {"code", "message", "retriable"}}`.
//! Dropping a suggest request (client disconnect) cancels its generation.

use std::future::Future;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use dashmap::DashMap;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Mutex;
use tokio_util::sync::CancellationToken;
use tower_http::cors::{Any, CorsLayer};

use crate::clock::{Clock, IdSource, RandomIds, SequentialIds, SteppingClock, SystemClock};
use crate::config::{BackendMode, Config, ConfigError, Runtime};
use crate::llm::LlmError;
use crate::persistence::{BackendMeta, SessionStore, SessionSummary, StoreError};
use crate::suggest::{SuggestError, SuggestStep, SuggestionQuery, SuggestionSet, SuggestionState};
use crate::wizard::{Action, AssembledPrompt, AssemblyOptions, Session, SessionId, Step, WizardError};

/// Machine-readable code plus a sentence a person can act on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
    pub retriable: bool,
}

impl ApiError {
    fn new(code: &str, message: impl Into<String>, retriable: bool) -> Self {
        Self {
            code: code.into(),
            message: message.into(),
            retriable,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: ApiError,
}

/// Everything a route can fail with.
#[derive(Debug, Error)]
pub enum AppError {
    #[error(transparent)]
    Wizard(#[from] WizardError),
    #[error(transparent)]
    Suggest(#[from] SuggestError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("internal error: {0}")]
    Internal(String),
}

fn backend_error(e: &LlmError, mode: BackendMode) -> (StatusCode, ApiError) {
    let unavailable = || {
        (
            StatusCode::SERVICE_UNAVAILABLE,
            ApiError::new(
                "backend_unavailable",
                "The suggestion service is not reachable right now. Please try again in a moment.",
                true,
            ),
        )
    };
    match e {
        LlmError::BackendUnavailable(_) => unavailable(),
        LlmError::Timeout => (
            StatusCode::GATEWAY_TIMEOUT,
            ApiError::new(
                "backend_timeout",
                "The suggestion service took too long to answer. Please try again.",
                true,
            ),
        ),
        LlmError::Cancelled => cancelled(),
        LlmError::MissingFixture { .. } if mode == BackendMode::Fixture => (
            StatusCode::SERVICE_UNAVAILABLE,
            ApiError::new(
                "missing_fixture",
                "No recorded suggestions exist for this request. Type your own text or record fixtures for it.",
                false,
            ),
        ),
        LlmError::MissingFixture { .. } | LlmError::Fixture(_) | LlmError::RecordingDisabled => unavailable(),
        LlmError::InvalidRequest(_) => internal(),
    }
}

fn cancelled() -> (StatusCode, ApiError) {
    (
        StatusCode::from_u16(499).expect("valid status"),
        ApiError::new("cancelled", "The request was cancelled before suggestions arrived.", true),
    )
}

fn internal() -> (StatusCode, ApiError) {
    (
        StatusCode::INTERNAL_SERVER_ERROR,
        ApiError::new("internal_error", "Something went wrong on our side. Please try again.", true),
    )
}

/// Maps every internal error to exactly one status and [`ApiError`].
pub fn error_mapping(err: &AppError, mode: BackendMode) -> (StatusCode, ApiError) {
    use StatusCode as S;
    match err {
        AppError::Wizard(e) => match e {
            WizardError::WrongStep { expected, current } => (
                S::CONFLICT,
                ApiError::new(
                    "wrong_step",
                    format!("This action is for the {expected} step, but you are on the {current} step."),
                    false,
                ),
            ),
            WizardError::Finished => (
                S::CONFLICT,
                ApiError::new("wrong_step", "Your prompt is finished. Go back or restart to change it.", false),
            ),
            WizardError::SkipNotAllowed => (
                S::CONFLICT,
                ApiError::new(
                    "skip_not_allowed",
                    "The scene can't be skipped. Pick a suggested scene or type your own.",
                    false,
                ),
            ),
            WizardError::EmptyPayload => (
                S::UNPROCESSABLE_ENTITY,
                ApiError::new("empty_payload", "Please enter or pick some text first.", false),
            ),
            WizardError::NoScene => (
                S::CONFLICT,
                ApiError::new("no_scene", "Pick or type a scene before replacing words in it.", false),
            ),
            WizardError::EmptyPrompt => (
                S::NOT_FOUND,
                ApiError::new("no_scene", "Your prompt needs a scene before it can be finished.", false),
            ),
            WizardError::WordNotFound { word } => (
                S::UNPROCESSABLE_ENTITY,
                ApiError::new("word_not_found", format!("The word \"{word}\" is not in the scene."), false),
            ),
            WizardError::NoSceneWords => (
                S::CONFLICT,
                ApiError::new(
                    "no_scene_words",
                    "Add an environment, subjects or actions before asking for scene ideas, or type a scene yourself.",
                    false,
                ),
            ),
            WizardError::InconsistentEvent { .. } => internal(),
        },
        AppError::Suggest(e) => match e {
            SuggestError::InvalidQuery(detail) => (
                S::UNPROCESSABLE_ENTITY,
                ApiError::new("invalid_request", format!("This suggestion request is not valid: {detail}."), false),
            ),
            SuggestError::Template(_) => (
                S::UNPROCESSABLE_ENTITY,
                ApiError::new(
                    "invalid_request",
                    "One of the inputs can't be used for suggestions. Use a single line of text.",
                    false,
                ),
            ),
            SuggestError::Cancelled => cancelled(),
            SuggestError::Backend(e) => backend_error(e, mode),
            SuggestError::NoSuggestions => (
                S::BAD_GATEWAY,
                ApiError::new(
                    "no_suggestions",
                    "The model did not come up with any suggestions. Try again or type your own.",
                    true,
                ),
            ),
        },
        AppError::Store(e) => match e {
            StoreError::NotFound(_) => not_found(),
            StoreError::StorageFull => (
                S::INSUFFICIENT_STORAGE,
                ApiError::new("storage_full", "There is no space left to save your session.", false),
            ),
            StoreError::SchemaMismatch { .. } | StoreError::CorruptRecord(_) => (
                S::INTERNAL_SERVER_ERROR,
                ApiError::new("corrupt_session", "This saved session can't be read anymore.", false),
            ),
            StoreError::SerializationFailure(_) | StoreError::Io(_) => (
                S::INTERNAL_SERVER_ERROR,
                ApiError::new("storage_error", "Your session could not be saved. Please try again.", true),
            ),
        },
        AppError::NotFound(_) => not_found(),
        AppError::InvalidRequest(detail) => (
            S::BAD_REQUEST,
            ApiError::new("invalid_request", format!("The request is not valid: {detail}."), false),
        ),
        AppError::Internal(_) => internal(),
    }
}

fn not_found() -> (StatusCode, ApiError) {
    (
        StatusCode::NOT_FOUND,
        ApiError::new("not_found", "That session does not exist.", false),
    )
}

/// An [`AppError`] bound to the backend mode it is reported under.
struct Failure(AppError, BackendMode);

impl IntoResponse for Failure {
    fn into_response(self) -> Response {
        let (status, error) = error_mapping(&self.0, self.1);
        if status.is_server_error() {
            tracing::warn!(error = %self.0, code = %error.code, "request failed");
        }
        (status, Json(ErrorBody { error })).into_response()
    }
}

struct SessionSlot {
    session: Mutex<Session>,
    suggestions: Mutex<SuggestionState>,
}

impl SessionSlot {
    fn new(session: Session) -> Arc<Self> {
        Arc::new(Self {
            session: Mutex::new(session),
            suggestions: Mutex::new(SuggestionState::new()),
        })
    }
}

/// Shared service state.
pub struct AppState {
    runtime: Runtime,
    store: Option<SessionStore>,
    sessions: DashMap<SessionId, Arc<SessionSlot>>,
    clock: Arc<dyn Clock>,
    ids: Arc<dyn IdSource>,
    assembly: AssemblyOptions,
    meta: BackendMeta,
}

impl AppState {
    pub fn new(
        runtime: Runtime,
        store: Option<SessionStore>,
        clock: Arc<dyn Clock>,
        ids: Arc<dyn IdSource>,
        assembly: AssemblyOptions,
    ) -> Self {
        let meta = BackendMeta {
            mode: runtime.mode,
            fixture_path: runtime.fixture_path.as_ref().map(|p| p.display().to_string()),
            backend_url: None,
        };
        Self {
            runtime,
            store,
            sessions: DashMap::new(),
            clock,
            ids,
            assembly,
            meta,
        }
    }

    pub fn from_config(config: &Config) -> Result<Self, ConfigError> {
        let runtime = config.build_runtime()?;
        let store = config
            .session_dir
            .as_ref()
            .map(|dir| SessionStore::new(dir).with_assembly(config.assembly));
        let (clock, ids): (Arc<dyn Clock>, Arc<dyn IdSource>) = if config.deterministic {
            (Arc::new(SteppingClock::default()), Arc::new(SequentialIds::default()))
        } else {
            (Arc::new(SystemClock), Arc::new(RandomIds))
        };
        let mut state = Self::new(runtime, store, clock, ids, config.assembly);
        state.meta.backend_url = config.backend_url.clone();
        Ok(state)
    }

    pub fn runtime(&self) -> &Runtime {
        &self.runtime
    }

    fn fail(&self, e: impl Into<AppError>) -> Failure {
        Failure(e.into(), self.runtime.mode)
    }

    fn slot(&self, id: &str) -> Result<Arc<SessionSlot>, AppError> {
        let id: SessionId = id
            .parse()
            .map_err(|_| AppError::NotFound(format!("malformed session id {id:?}")))?;
        if let Some(slot) = self.sessions.get(&id) {
            return Ok(slot.clone());
        }
        let store = self.store.as_ref().ok_or_else(|| AppError::NotFound(id.to_string()))?;
        let session = store.load(id)?;
        Ok(self.sessions.entry(id).or_insert_with(|| SessionSlot::new(session)).clone())
    }

    fn persist(&self, session: &Session) -> Result<(), AppError> {
        if let Some(store) = &self.store {
            store.save(session, Some(self.meta.clone()))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuggestRequest {
    pub step: SuggestStep,
    #[serde(default)]
    pub inputs: Option<Vec<String>>,
    #[serde(default)]
    pub min_count: Option<usize>,
    #[serde(default)]
    pub exclude: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuggestResponse {
    pub step: SuggestStep,
    #[serde(flatten)]
    pub set: SuggestionSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notice: Option<ApiError>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Type,
    Accept,
    Edit,
    Skip,
    Back,
    Restart,
    ReplaceWord,
}

/// Wire form of a wizard action.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ActionRequest {
    pub kind: Option<ActionKind>,
    /// Defaults to the session's current step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<Step>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<String>,
    /// Suggestion text before an edit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub original: Option<String>,
    /// Word a replacement targets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    /// Defaults to true.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub advance: Option<bool>,
}

impl ActionRequest {
    pub fn into_action(self, current: Step) -> Result<Action, AppError> {
        let kind = self
            .kind
            .ok_or_else(|| AppError::InvalidRequest("the action kind is missing".into()))?;
        let step = self.step.unwrap_or(current);
        let advance = self.advance.unwrap_or(true);
        let payload = self.payload.unwrap_or_default();
        Ok(match kind {
            ActionKind::Type => Action::Type {
                step,
                text: payload,
                advance,
            },
            ActionKind::Accept => Action::Accept {
                step,
                text: payload,
                advance,
            },
            ActionKind::Edit => Action::Edit {
                step,
                original: self
                    .original
                    .ok_or_else(|| AppError::InvalidRequest("an edit needs the original suggestion".into()))?,
                edited: payload,
                advance,
            },
            ActionKind::Skip => Action::Skip { step },
            ActionKind::Back => Action::Back,
            ActionKind::Restart => Action::Restart,
            ActionKind::ReplaceWord => Action::ReplaceWord {
                target: self
                    .target
                    .ok_or_else(|| AppError::InvalidRequest("a replacement needs the target word".into()))?,
                replacement: payload,
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptResponse {
    pub prompt: AssembledPrompt,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub mode: BackendMode,
    pub backend: String,
    pub backend_reachable: bool,
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, AppError> {
    if body.is_empty() {
        return serde_json::from_str("{}").map_err(|e| AppError::InvalidRequest(e.to_string()));
    }
    serde_json::from_slice(body).map_err(|e| AppError::InvalidRequest(e.to_string()))
}

type Reply<T> = Result<T, Failure>;

async fn create_session(State(app): State<Arc<AppState>>) -> Reply<(StatusCode, Json<Session>)> {
    let session = Session::new(SessionId(app.ids.next_id()), app.clock.now());
    app.persist(&session).map_err(|e| app.fail(e))?;
    app.sessions.insert(session.id(), SessionSlot::new(session.clone()));
    Ok((StatusCode::CREATED, Json(session)))
}

async fn list_sessions(State(app): State<Arc<AppState>>) -> Reply<Json<Vec<SessionSummary>>> {
    if let Some(store) = &app.store {
        return store.list_sessions().map(Json).map_err(|e| app.fail(e));
    }
    let slots: Vec<_> = app.sessions.iter().map(|e| e.value().clone()).collect();
    let mut out = Vec::with_capacity(slots.len());
    for slot in slots {
        let s = slot.session.lock().await;
        out.push(SessionSummary {
            id: s.id(),
            updated: s.updated(),
            preview: s.preview(app.assembly).unwrap_or_default(),
        });
    }
    out.sort_by(|a, b| b.updated.cmp(&a.updated).then(a.id.cmp(&b.id)));
    Ok(Json(out))
}

async fn get_session(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Reply<Json<Session>> {
    let slot = app.slot(&id).map_err(|e| app.fail(e))?;
    let session = slot.session.lock().await.clone();
    Ok(Json(session))
}

/// Inputs a suggestion step takes from the session when the request names none.
pub fn session_inputs(session: &Session, step: SuggestStep) -> Result<Vec<String>, AppError> {
    Ok(match step {
        SuggestStep::Environment | SuggestStep::Style => Vec::new(),
        SuggestStep::Subjects => vec![session.environment().map(str::to_string).ok_or_else(|| {
            AppError::Suggest(SuggestError::InvalidQuery("choose an environment first".into()))
        })?],
        SuggestStep::Actions => {
            if session.subjects().is_empty() {
                return Err(SuggestError::InvalidQuery("choose at least one subject first".into()).into());
            }
            session.subjects().to_vec()
        }
        SuggestStep::Scene => session.scene_words()?,
        SuggestStep::Synonyms => {
            return Err(SuggestError::InvalidQuery("name the word to find replacements for".into()).into());
        }
    })
}

async fn suggest(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Reply<Json<SuggestResponse>> {
    let slot = app.slot(&id).map_err(|e| app.fail(e))?;
    let request: SuggestRequest = parse_body(&body).map_err(|e| app.fail(e))?;
    let inputs = match request.inputs {
        Some(inputs) => inputs,
        None => {
            let session = slot.session.lock().await;
            session_inputs(&session, request.step).map_err(|e| app.fail(e))?
        }
    };
    let query = SuggestionQuery {
        step: request.step,
        inputs,
        min_count: request.min_count,
        exclude: request.exclude,
    };

    // dropping this handler (client went away) cancels the generation
    let cancel = CancellationToken::new();
    let _guard = cancel.clone().drop_guard();
    let mut state = slot.suggestions.lock().await;
    let result = app.runtime.engine.suggest(&mut state, &query, &cancel).await;
    drop(state);
    if let Err(e) = app.runtime.save_recordings() {
        tracing::warn!(error = %e, "could not save recorded fixtures");
    }
    let set = result.map_err(|e| app.fail(e))?;
    let notice = set.exhausted.then(|| {
        ApiError::new(
            "exhausted_suggestions",
            format!(
                "Only {} new suggestion(s) could be found. Ask again or type your own.",
                set.items.len()
            ),
            true,
        )
    });
    Ok(Json(SuggestResponse {
        step: request.step,
        set,
        notice,
    }))
}

async fn apply_action(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Reply<Json<Session>> {
    let slot = app.slot(&id).map_err(|e| app.fail(e))?;
    let request: ActionRequest = parse_body(&body).map_err(|e| app.fail(e))?;
    let mut guard = slot.session.lock().await;
    let action = request.into_action(guard.step()).map_err(|e| app.fail(e))?;
    let mut next = guard.clone();
    next.apply(action, app.clock.now()).map_err(|e| app.fail(e))?;
    app.persist(&next).map_err(|e| app.fail(e))?;
    *guard = next.clone();
    Ok(Json(next))
}

async fn get_prompt(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Reply<Json<PromptResponse>> {
    let slot = app.slot(&id).map_err(|e| app.fail(e))?;
    let mut guard = slot.session.lock().await;
    let mut next = guard.clone();
    let prompt = next.assemble(app.assembly, app.clock.now()).map_err(|e| app.fail(e))?;
    app.persist(&next).map_err(|e| app.fail(e))?;
    *guard = next;
    Ok(Json(PromptResponse { prompt }))
}

async fn healthz(State(app): State<Arc<AppState>>) -> Json<Health> {
    let backend = app.runtime.engine.client().backend();
    let reachable = backend.healthy().await;
    Json(Health {
        status: if reachable { "ok" } else { "degraded" }.into(),
        mode: app.runtime.mode,
        backend: backend.id().to_string(),
        backend_reachable: reachable,
    })
}

async fn fallback(State(app): State<Arc<AppState>>) -> Failure {
    app.fail(AppError::NotFound("route".into()))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/suggest", post(suggest))
        .route("/sessions/{id}/action", post(apply_action))
        .route("/sessions/{id}/prompt", get(get_prompt))
        .route("/healthz", get(healthz))
        .fallback(fallback)
        .with_state(state)
}

/// [`router`] wrapped in CORS for the configured web UI origin (any origin
/// when unset).
pub fn app(state: Arc<AppState>, cors_origin: Option<&str>) -> Result<Router, ConfigError> {
    let cors = CorsLayer::new().allow_methods(Any).allow_headers(Any);
    let cors = match cors_origin {
        Some(origin) => cors.allow_origin(
            origin
                .parse::<HeaderValue>()
                .map_err(|_| ConfigError::Invalid(format!("bad CORS origin {origin:?}")))?,
        ),
        None => cors.allow_origin(Any),
    };
    Ok(router(state).layer(cors))
}

/// Serves until `shutdown` resolves.
pub async fn serve(config: &Config, shutdown: impl Future<Output = ()> + Send + 'static) -> Result<(), ConfigError> {
    let state = Arc::new(AppState::from_config(config)?);
    let app = app(state, config.cors_origin.as_deref())?;
    let listener = tokio::net::TcpListener::bind(&config.listen)
        .await
        .map_err(|e| ConfigError::Invalid(format!("cannot listen on {}: {e}", config.listen)))?;
    tracing::info!(addr = %config.listen, mode = %config.backend_mode, "serving");
    axum::serve(listener, app)
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(|e| ConfigError::Invalid(format!("server error: {e}")))?;
    Ok(())
}

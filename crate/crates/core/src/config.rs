//! Runtime configuration shared by the server and the CLI.
//!
//! Values come from an optional TOML file, then `PROMPTASSIST_*`
//! environment variables, then command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{Backend, FixtureBackend, FixtureStore, HttpBackend, LlmClient, LlmError, RecordingBackend};
use crate::suggest::{SuggestConfig, SuggestionEngine};
use crate::templates::{TemplateError, TemplateRegistry};
use crate::wizard::AssemblyOptions;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendMode {
    Live,
    #[default]
    Fixture,
    Record,
}

impl fmt::Display for BackendMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendMode::Live => "live",
            BackendMode::Fixture => "fixture",
            BackendMode::Record => "record",
        })
    }
}

impl FromStr for BackendMode {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "live" => Ok(BackendMode::Live),
            "fixture" => Ok(BackendMode::Fixture),
            "record" => Ok(BackendMode::Record),
            other => Err(ConfigError::Invalid(format!("unknown backend mode `{other}`"))),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Backend(#[from] LlmError),
    #[error(transparent)]
    Templates(#[from] TemplateError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub listen: String,
    pub backend_mode: BackendMode,
    pub fixture_path: Option<PathBuf>,
    pub backend_url: Option<String>,
    pub backend_token: Option<String>,
    pub timeout_secs: f64,
    pub template_pack: Option<PathBuf>,
    pub session_dir: Option<PathBuf>,
    pub cors_origin: Option<String>,
    /// Stepping clock and sequential ids, for reproducible records.
    pub deterministic: bool,
    pub assembly: AssemblyOptions,
    pub suggest: SuggestConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:8080".into(),
            backend_mode: BackendMode::Fixture,
            fixture_path: None,
            backend_url: None,
            backend_token: None,
            timeout_secs: 30.0,
            template_pack: None,
            session_dir: None,
            cors_origin: None,
            deterministic: false,
            assembly: AssemblyOptions::default(),
            suggest: SuggestConfig::default(),
        }
    }
}

fn parse_var<T: FromStr>(name: &str, value: &str) -> Result<T, ConfigError> {
    value
        .parse()
        .map_err(|_| ConfigError::Invalid(format!("{name}={value:?} is not valid")))
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Reads `path` when given, then applies the process environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut config = match path {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
                    path: path.to_path_buf(),
                    source,
                })?;
                Self::from_toml(&text)?
            }
            None => Self::default(),
        };
        config.apply_env(|name| std::env::var(name).ok())?;
        Ok(config)
    }

    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(v) = var("PROMPTASSIST_LISTEN") {
            self.listen = v;
        }
        if let Some(v) = var("PROMPTASSIST_BACKEND_MODE") {
            self.backend_mode = v.parse()?;
        }
        if let Some(v) = var("PROMPTASSIST_FIXTURES") {
            self.fixture_path = Some(v.into());
        }
        if let Some(v) = var("PROMPTASSIST_BACKEND_URL") {
            self.backend_url = Some(v);
        }
        if let Some(v) = var("PROMPTASSIST_BACKEND_TOKEN") {
            self.backend_token = Some(v);
        }
        if let Some(v) = var("PROMPTASSIST_TIMEOUT_SECS") {
            self.timeout_secs = parse_var("PROMPTASSIST_TIMEOUT_SECS", &v)?;
        }
        if let Some(v) = var("PROMPTASSIST_TEMPERATURE") {
            self.suggest.temperature = parse_var("PROMPTASSIST_TEMPERATURE", &v)?;
        }
        if let Some(v) = var("PROMPTASSIST_MIN_COUNT") {
            self.suggest.default_min_count = parse_var("PROMPTASSIST_MIN_COUNT", &v)?;
        }
        if let Some(v) = var("PROMPTASSIST_SESSION_DIR") {
            self.session_dir = Some(v.into());
        }
        if let Some(v) = var("PROMPTASSIST_CORS_ORIGIN") {
            self.cors_origin = Some(v);
        }
        if let Some(v) = var("PROMPTASSIST_DETERMINISTIC") {
            self.deterministic = matches!(v.as_str(), "1" | "true" | "yes");
        }
        Ok(())
    }

    pub fn timeout(&self) -> Result<Duration, ConfigError> {
        Duration::try_from_secs_f64(self.timeout_secs)
            .ok()
            .filter(|d| !d.is_zero())
            .ok_or_else(|| ConfigError::Invalid(format!("timeout_secs {} must be positive", self.timeout_secs)))
    }

    pub fn templates(&self) -> Result<TemplateRegistry, ConfigError> {
        match &self.template_pack {
            Some(dir) => Ok(TemplateRegistry::load_pack(dir)?),
            None => Ok(TemplateRegistry::builtin()),
        }
    }

    /// Builds the backend and suggestion engine this configuration describes.
    pub fn build_runtime(&self) -> Result<Runtime, ConfigError> {
        let live = || -> Result<Arc<dyn Backend>, ConfigError> {
            let url = self
                .backend_url
                .clone()
                .ok_or_else(|| ConfigError::Invalid("backend_url is required for live and record modes".into()))?;
            Ok(Arc::new(HttpBackend::new(url).with_token(self.backend_token.clone())))
        };
        let (backend, fixtures): (Arc<dyn Backend>, Option<Arc<FixtureStore>>) = match self.backend_mode {
            BackendMode::Live => (live()?, None),
            BackendMode::Fixture => {
                let path = self
                    .fixture_path
                    .as_deref()
                    .ok_or_else(|| ConfigError::Invalid("fixture_path is required for fixture mode".into()))?;
                let store = Arc::new(FixtureStore::load(path)?);
                (Arc::new(FixtureBackend::new(store.clone())), Some(store))
            }
            BackendMode::Record => {
                let store = match &self.fixture_path {
                    Some(path) if path.exists() => {
                        let mut store = FixtureStore::load(path)?;
                        store.set_recording(true);
                        store
                    }
                    _ => FixtureStore::recording(),
                };
                let store = Arc::new(store);
                (Arc::new(RecordingBackend::new(live()?, store.clone())?), Some(store))
            }
        };
        let client = LlmClient::new(backend).with_timeout(self.timeout()?);
        Ok(Runtime {
            mode: self.backend_mode,
            engine: SuggestionEngine::new(client, self.templates()?, self.suggest.clone()),
            fixtures,
            fixture_path: self.fixture_path.clone(),
        })
    }
}

/// The assembled suggestion stack for one process.
#[derive(Debug, Clone)]
pub struct Runtime {
    pub mode: BackendMode,
    pub engine: SuggestionEngine,
    pub fixtures: Option<Arc<FixtureStore>>,
    pub fixture_path: Option<PathBuf>,
}

impl Runtime {
    /// In record mode, writes everything recorded so far to the fixture file.
    pub fn save_recordings(&self) -> Result<(), LlmError> {
        match (self.mode, &self.fixtures, &self.fixture_path) {
            (BackendMode::Record, Some(store), Some(path)) => store.save(path),
            _ => Ok(()),
        }
    }
}

//! Command-line front end: one-shot suggestions, a line-oriented wizard,
//! fixture recording and the HTTP server.
//!
//! Exit codes: 0 success, 2 usage error, 3 fewer suggestions than asked for
//! (the partial list is still printed), 4 backend failure.
//!
//! # Wizard script format
//!
//! One command per line; blank lines and lines starting with `#` are ignored.
//! A trailing `+` on `accept`, `type`, `edit` and `pick` stays on the step,
//! which is how several subjects or actions are added.
//!
//! | line | event |
//! |---|---|
//! | `accept TEXT` | accepted_suggestion |
//! | `pick N` | accepted_suggestion (Nth item of the last list shown) |
//! | `type TEXT` | typed |
//! | `edit ORIGINAL => EDITED` | edited_suggestion |
//! | `skip` | skipped |
//! | `back` | went_back |
//! | `restart` | restarted |
//! | `replace WORD => NEW` | replaced_word |
//! | `suggest` / `suggest more` | none; prints numbered suggestions |
//!
//! When the script ends the effort report is printed, followed by the
//! assembled prompt as the last line of standard output.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use tokio_util::sync::CancellationToken;

use crate::api::{self, AppError, SuggestResponse, error_mapping, session_inputs};
use crate::clock::{Clock, IdSource, RandomIds, SequentialIds, SteppingClock, SystemClock};
use crate::config::{BackendMode, Config, ConfigError, Runtime};
use crate::llm::{FixtureStore, HttpBackend, LlmClient, RecordingBackend};
use crate::persistence::{BackendMeta, SessionStore};
use crate::suggest::{SuggestError, SuggestStep, SuggestionEngine, SuggestionQuery, SuggestionState};
use crate::wizard::{Action, Session, SessionId, Step, WizardError};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_EXHAUSTED: u8 = 3;
pub const EXIT_BACKEND: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "promptassist", version, about = "Build text-to-image prompts step by step")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print suggestions for one step, one per line.
    Suggest(SuggestArgs),
    /// Run the wizard from a script or standard input.
    Wizard(WizardArgs),
    /// Fill a fixture file from a live backend.
    Record(RecordArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct BackendArgs {
    /// TOML configuration file.
    #[arg(long, env = "PROMPTASSIST_CONFIG")]
    pub config: Option<PathBuf>,
    /// Completion endpoint URL (live mode).
    #[arg(long, conflicts_with = "fixtures")]
    pub backend: Option<String>,
    /// Fixture file to replay (fixture mode).
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SuggestArgs {
    #[arg(long)]
    pub step: SuggestStep,
    /// Template input; repeat for several subjects or scene words.
    #[arg(long = "input")]
    pub inputs: Vec<String>,
    /// Minimum number of suggestions wanted.
    #[arg(long)]
    pub count: Option<usize>,
    /// File with suggestions to leave out, one per line.
    #[arg(long)]
    pub exclude_file: Option<PathBuf>,
    /// Print the suggestion set as JSON.
    #[arg(long)]
    pub json: bool,
    #[command(flatten)]
    pub backend: BackendArgs,
}

#[derive(Debug, Clone, Args)]
pub struct WizardArgs {
    /// Script to run; without it commands are read from standard input.
    #[arg(long)]
    pub script: Option<PathBuf>,
    #[command(flatten)]
    pub backend: BackendArgs,
}

#[derive(Debug, Clone, Args)]
pub struct RecordArgs {
    /// Completion endpoint URL.
    #[arg(long)]
    pub backend: String,
    /// Fixture file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Query file: `STEP [INPUT, INPUT, ...]` per line.
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[arg(long, env = "PROMPTASSIST_CONFIG")]
    pub config: Option<PathBuf>,
    /// Overrides the configured listen address.
    #[arg(long)]
    pub listen: Option<String>,
}

/// A failed command: exit code plus the message for standard error.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliFailure {
    pub code: u8,
    pub message: String,
}

impl CliFailure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<ConfigError> for CliFailure {
    fn from(e: ConfigError) -> Self {
        CliFailure::usage(e.to_string())
    }
}

fn exit_code(err: &AppError) -> u8 {
    match err {
        AppError::Suggest(SuggestError::Backend(_) | SuggestError::NoSuggestions | SuggestError::Cancelled) => {
            EXIT_BACKEND
        }
        AppError::Store(_) | AppError::Internal(_) => EXIT_FAILURE,
        _ => EXIT_USAGE,
    }
}

fn failure(err: AppError, mode: BackendMode) -> CliFailure {
    let (_, api) = error_mapping(&err, mode);
    CliFailure {
        code: exit_code(&err),
        message: format!("{}: {}", api.code, api.message),
    }
}

fn resolve_config(args: &BackendArgs) -> Result<Config, CliFailure> {
    let mut config = Config::load(args.config.as_deref())?;
    if let Some(url) = &args.backend {
        config.backend_mode = BackendMode::Live;
        config.backend_url = Some(url.clone());
    }
    if let Some(path) = &args.fixtures {
        config.backend_mode = BackendMode::Fixture;
        config.fixture_path = Some(path.clone());
    }
    Ok(config)
}

/// A token cancelled by Ctrl-C.
fn interrupt_token() -> CancellationToken {
    let token = CancellationToken::new();
    let child = token.clone();
    tokio::spawn(async move {
        if tokio::signal::ctrl_c().await.is_ok() {
            child.cancel();
        }
    });
    token
}

fn read_lines(path: &Path) -> Result<Vec<String>, CliFailure> {
    std::fs::read_to_string(path)
        .map(|text| text.lines().map(str::to_string).collect())
        .map_err(|e| CliFailure::usage(format!("cannot read {}: {e}", path.display())))
}

/// Runs a parsed command line; returns the process exit code.
pub async fn execute(cli: Cli, input: &mut dyn BufRead, out: &mut dyn Write, err: &mut dyn Write) -> u8 {
    let result = match cli.command {
        Command::Suggest(args) => cmd_suggest(&args, out).await,
        Command::Wizard(args) => cmd_wizard(&args, input, out, err).await,
        Command::Record(args) => cmd_record(&args, out).await,
        Command::Serve(args) => cmd_serve(&args).await,
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

pub async fn cmd_suggest(args: &SuggestArgs, out: &mut dyn Write) -> Result<u8, CliFailure> {
    let config = resolve_config(&args.backend)?;
    let runtime = config.build_runtime()?;
    let exclude = match &args.exclude_file {
        Some(path) => read_lines(path)?
            .into_iter()
            .map(|l| l.trim().to_string())
            .filter(|l| !l.is_empty())
            .collect(),
        None => Vec::new(),
    };
    let query = SuggestionQuery {
        step: args.step,
        inputs: args.inputs.clone(),
        min_count: args.count,
        exclude,
    };
    let cancel = interrupt_token();
    let set = runtime
        .engine
        .suggest(&mut SuggestionState::new(), &query, &cancel)
        .await
        .map_err(|e| failure(e.into(), runtime.mode))?;
    let exhausted = set.exhausted;
    let written = if args.json {
        let response = SuggestResponse {
            step: args.step,
            set,
            notice: None,
        };
        let text = serde_json::to_string_pretty(&response).map_err(|e| CliFailure {
            code: EXIT_FAILURE,
            message: e.to_string(),
        })?;
        writeln!(out, "{text}")
    } else {
        set.items.iter().try_for_each(|item| writeln!(out, "{item}"))
    };
    written.map_err(|e| CliFailure {
        code: EXIT_FAILURE,
        message: e.to_string(),
    })?;
    Ok(if exhausted { EXIT_EXHAUSTED } else { EXIT_OK })
}

/// One parsed wizard script line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScriptCommand {
    Accept { text: String, advance: bool },
    Pick { index: usize, advance: bool },
    Type { text: String, advance: bool },
    Edit { original: String, edited: String, advance: bool },
    Skip,
    Back,
    Restart,
    Replace { target: String, replacement: String },
    Suggest { more: bool },
}

fn split_arrow(rest: &str, verb: &str) -> Result<(String, String), String> {
    let (a, b) = rest
        .split_once("=>")
        .ok_or_else(|| format!("`{verb}` needs `OLD => NEW`"))?;
    Ok((a.trim().to_string(), b.trim().to_string()))
}

/// Parses one script line; `Ok(None)` for blank lines and comments.
pub fn parse_script_line(line: &str) -> Result<Option<ScriptCommand>, String> {
    let line = line.trim();
    if line.is_empty() || line.starts_with('#') {
        return Ok(None);
    }
    let (verb, rest) = match line.split_once(char::is_whitespace) {
        Some((verb, rest)) => (verb, rest.trim()),
        None => (line, ""),
    };
    let (verb, advance) = match verb.strip_suffix('+') {
        Some(v) => (v, false),
        None => (verb, true),
    };
    let needs_text = |what: &str| -> Result<String, String> {
        if rest.is_empty() {
            Err(format!("`{what}` needs text"))
        } else {
            Ok(rest.to_string())
        }
    };
    let no_args = |cmd: ScriptCommand| -> Result<ScriptCommand, String> {
        if !rest.is_empty() || !advance {
            Err(format!("`{verb}` takes no arguments"))
        } else {
            Ok(cmd)
        }
    };
    let command = match verb {
        "accept" => ScriptCommand::Accept {
            text: needs_text("accept")?,
            advance,
        },
        "type" => ScriptCommand::Type {
            text: needs_text("type")?,
            advance,
        },
        "pick" => ScriptCommand::Pick {
            index: rest
                .parse()
                .ok()
                .filter(|n| *n >= 1)
                .ok_or_else(|| format!("`pick` needs a list number, got `{rest}`"))?,
            advance,
        },
        "edit" => {
            let (original, edited) = split_arrow(rest, "edit")?;
            ScriptCommand::Edit {
                original,
                edited,
                advance,
            }
        }
        "replace" if advance => {
            let (target, replacement) = split_arrow(rest, "replace")?;
            ScriptCommand::Replace { target, replacement }
        }
        "suggest" if advance => match rest {
            "" => ScriptCommand::Suggest { more: false },
            "more" => ScriptCommand::Suggest { more: true },
            other => return Err(format!("`suggest` takes nothing or `more`, got `{other}`")),
        },
        "skip" => no_args(ScriptCommand::Skip)?,
        "back" => no_args(ScriptCommand::Back)?,
        "restart" => no_args(ScriptCommand::Restart)?,
        other => return Err(format!("unknown command `{other}`")),
    };
    Ok(Some(command))
}

/// The wizard driven by script commands.
pub struct ScriptedWizard {
    config: Config,
    runtime: Option<Runtime>,
    session: Session,
    suggestions: SuggestionState,
    clock: Arc<dyn Clock>,
    store: Option<SessionStore>,
    /// Last list shown, for `pick`.
    last: Vec<String>,
    /// Everything shown at the current step, excluded by `suggest more`.
    shown: Vec<String>,
    shown_at: Step,
}

impl ScriptedWizard {
    pub fn new(config: Config) -> Self {
        let (clock, ids): (Arc<dyn Clock>, Arc<dyn IdSource>) = if config.deterministic {
            (Arc::new(SteppingClock::default()), Arc::new(SequentialIds::default()))
        } else {
            (Arc::new(SystemClock), Arc::new(RandomIds))
        };
        let session = Session::new(SessionId(ids.next_id()), clock.now());
        let store = config
            .session_dir
            .as_ref()
            .map(|dir| SessionStore::new(dir).with_assembly(config.assembly));
        Self {
            config,
            runtime: None,
            session,
            suggestions: SuggestionState::new(),
            clock,
            store,
            last: Vec::new(),
            shown: Vec::new(),
            shown_at: Step::Environment,
        }
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    fn mode(&self) -> BackendMode {
        self.config.backend_mode
    }

    /// The backend is only needed once suggestions are asked for.
    fn runtime(&mut self) -> Result<&Runtime, CliFailure> {
        if self.runtime.is_none() {
            self.runtime = Some(self.config.build_runtime()?);
        }
        Ok(self.runtime.as_ref().expect("runtime was just built"))
    }

    /// Runs one command; suggestion lists are written to `transcript`.
    pub async fn run(
        &mut self,
        command: ScriptCommand,
        cancel: &CancellationToken,
        transcript: &mut dyn Write,
    ) -> Result<(), CliFailure> {
        if self.shown_at != self.session.step() {
            self.shown_at = self.session.step();
            self.shown.clear();
            self.last.clear();
        }
        let step = self.session.step();
        let action = match command {
            ScriptCommand::Suggest { more } => return self.suggest(more, cancel, transcript).await,
            ScriptCommand::Accept { text, advance } => Action::Accept { step, text, advance },
            ScriptCommand::Pick { index, advance } => {
                let text = self.last.get(index - 1).cloned().ok_or_else(|| {
                    CliFailure::usage(format!("there is no suggestion number {index} to pick"))
                })?;
                Action::Accept { step, text, advance }
            }
            ScriptCommand::Type { text, advance } => Action::Type { step, text, advance },
            ScriptCommand::Edit {
                original,
                edited,
                advance,
            } => Action::Edit {
                step,
                original,
                edited,
                advance,
            },
            ScriptCommand::Skip => Action::Skip { step },
            ScriptCommand::Back => Action::Back,
            ScriptCommand::Restart => Action::Restart,
            ScriptCommand::Replace { target, replacement } => Action::ReplaceWord { target, replacement },
        };
        let mut next = self.session.clone();
        next.apply(action, self.clock.now())
            .map_err(|e| failure(e.into(), self.mode()))?;
        self.persist(&next)?;
        self.session = next;
        Ok(())
    }

    async fn suggest(
        &mut self,
        more: bool,
        cancel: &CancellationToken,
        transcript: &mut dyn Write,
    ) -> Result<(), CliFailure> {
        let mode = self.mode();
        let step = SuggestStep::for_wizard_step(self.session.step())
            .ok_or_else(|| failure(WizardError::Finished.into(), mode))?;
        let inputs = session_inputs(&self.session, step).map_err(|e| failure(e, mode))?;
        let exclude = if more { self.shown.clone() } else { Vec::new() };
        let query = SuggestionQuery::new(step, inputs).exclude(exclude);
        let engine: SuggestionEngine = self.runtime()?.engine.clone();
        let set = engine
            .suggest(&mut self.suggestions, &query, cancel)
            .await
            .map_err(|e| failure(e.into(), mode))?;
        for (i, item) in set.items.iter().enumerate() {
            let _ = writeln!(transcript, "  {}. {item}", i + 1);
        }
        if set.exhausted {
            let _ = writeln!(transcript, "  (only {} suggestion(s) found)", set.items.len());
        }
        self.shown.extend(set.items.iter().cloned());
        self.last = set.items;
        Ok(())
    }

    fn persist(&self, session: &Session) -> Result<(), CliFailure> {
        if let Some(store) = &self.store {
            let meta = BackendMeta {
                mode: self.config.backend_mode,
                fixture_path: self.config.fixture_path.as_ref().map(|p| p.display().to_string()),
                backend_url: self.config.backend_url.clone(),
            };
            store
                .save(session, Some(meta))
                .map_err(|e| failure(e.into(), self.mode()))?;
        }
        Ok(())
    }

    /// Assembles the prompt and writes the effort report and the prompt.
    pub fn finish(&mut self, out: &mut dyn Write) -> Result<String, CliFailure> {
        let mut next = self.session.clone();
        let prompt = next
            .assemble(self.config.assembly, self.clock.now())
            .map_err(|e| failure(e.into(), self.mode()))?;
        self.persist(&next)?;
        self.session = next;
        let e = &prompt.effort;
        let written = writeln!(out, "typed keystrokes: {}", e.typed_keystrokes)
            .and_then(|_| writeln!(out, "pointer actions: {}", e.pointer_actions))
            .and_then(|_| writeln!(out, "prompt characters: {}", e.prompt_chars))
            .and_then(|_| writeln!(out, "savings ratio: {:.3}", e.savings_ratio))
            .and_then(|_| writeln!(out, "{}", prompt.text));
        written.map_err(|e| CliFailure {
            code: EXIT_FAILURE,
            message: e.to_string(),
        })?;
        Ok(prompt.text)
    }
}

pub async fn cmd_wizard(
    args: &WizardArgs,
    input: &mut dyn BufRead,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<u8, CliFailure> {
    let config = resolve_config(&args.backend)?;
    let mut wizard = ScriptedWizard::new(config);
    let cancel = interrupt_token();

    if let Some(path) = &args.script {
        for (n, line) in read_lines(path)?.iter().enumerate() {
            let command = parse_script_line(line).map_err(|m| CliFailure::usage(format!("line {}: {m}", n + 1)))?;
            if let Some(command) = command {
                wizard.run(command, &cancel, err).await.map_err(|f| CliFailure {
                    code: f.code,
                    message: format!("line {}: {}", n + 1, f.message),
                })?;
            }
        }
    } else {
        // interactive: report problems and keep going
        let mut line = String::new();
        loop {
            let _ = write!(err, "[{}] > ", wizard.session().step());
            let _ = err.flush();
            line.clear();
            match input.read_line(&mut line) {
                Ok(0) => break,
                Ok(_) => {}
                Err(e) => return Err(CliFailure::usage(format!("cannot read input: {e}"))),
            }
            match parse_script_line(&line) {
                Ok(Some(command)) => {
                    if let Err(f) = wizard.run(command, &cancel, err).await {
                        let _ = writeln!(err, "{}", f.message);
                    }
                }
                Ok(None) => {}
                Err(m) => {
                    let _ = writeln!(err, "{m}");
                }
            }
        }
        let _ = writeln!(err);
    }
    wizard.finish(out)?;
    Ok(EXIT_OK)
}

/// Parses a `record` query line such as `scene tree, bench`.
pub fn parse_query_line(line: &str) -> Result<Option<SuggestionQuery>, String> {
    let line = line.trim();
    if line.is_empty() || line.starts_with('#') {
        return Ok(None);
    }
    let (step, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
    let step: SuggestStep = step.parse()?;
    let inputs: Vec<String> = rest
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect();
    Ok(Some(SuggestionQuery::new(step, inputs)))
}

pub async fn cmd_record(args: &RecordArgs, out: &mut dyn Write) -> Result<u8, CliFailure> {
    let config = Config::load(args.config.as_deref())?;
    let mut queries = Vec::new();
    for (n, line) in read_lines(&args.queries)?.iter().enumerate() {
        if let Some(q) = parse_query_line(line).map_err(|m| CliFailure::usage(format!("line {}: {m}", n + 1)))? {
            queries.push(q);
        }
    }
    let store = Arc::new(FixtureStore::recording());
    let live = Arc::new(HttpBackend::new(args.backend.clone()).with_token(config.backend_token.clone()));
    let backend = RecordingBackend::new(live, store.clone()).map_err(|e| CliFailure {
        code: EXIT_BACKEND,
        message: e.to_string(),
    })?;
    let client = LlmClient::new(Arc::new(backend)).with_timeout(config.timeout()?);
    let engine = SuggestionEngine::new(client, config.templates()?, config.suggest.clone());
    let cancel = interrupt_token();
    let mut state = SuggestionState::new();
    for query in &queries {
        engine
            .suggest(&mut state, query, &cancel)
            .await
            .map_err(|e| failure(e.into(), BackendMode::Record))?;
    }
    store.save(&args.out).map_err(|e| CliFailure {
        code: EXIT_FAILURE,
        message: e.to_string(),
    })?;
    let _ = writeln!(out, "recorded {} entries to {}", store.len(), args.out.display());
    Ok(EXIT_OK)
}

pub async fn cmd_serve(args: &ServeArgs) -> Result<u8, CliFailure> {
    let mut config = Config::load(args.config.as_deref())?;
    if let Some(listen) = &args.listen {
        config.listen = listen.clone();
    }
    let shutdown = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    api::serve(&config, shutdown).await?;
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn script_lines() {
        assert_eq!(parse_script_line("  # note"), Ok(None));
        assert_eq!(parse_script_line(""), Ok(None));
        assert_eq!(
            parse_script_line("accept+ tree"),
            Ok(Some(ScriptCommand::Accept {
                text: "tree".into(),
                advance: false
            }))
        );
        assert_eq!(
            parse_script_line("edit a man => a young man"),
            Ok(Some(ScriptCommand::Edit {
                original: "a man".into(),
                edited: "a young man".into(),
                advance: true
            }))
        );
        assert_eq!(
            parse_script_line("replace young => old"),
            Ok(Some(ScriptCommand::Replace {
                target: "young".into(),
                replacement: "old".into()
            }))
        );
        assert_eq!(parse_script_line("pick 2"), Ok(Some(ScriptCommand::Pick { index: 2, advance: true })));
        assert_eq!(parse_script_line("suggest more"), Ok(Some(ScriptCommand::Suggest { more: true })));
        for bad in ["accept", "pick 0", "pick x", "skip now", "skip+", "edit a b", "dance", "suggest less"] {
            assert!(parse_script_line(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn query_lines() {
        let q = parse_query_line("scene tree, bench").unwrap().unwrap();
        assert_eq!(q.step, SuggestStep::Scene);
        assert_eq!(q.inputs, ["tree", "bench"]);
        let q = parse_query_line("environment").unwrap().unwrap();
        assert!(q.inputs.is_empty());
        assert!(parse_query_line("colour red").is_err());
    }

    #[test]
    fn clap_definition() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
        assert!(Cli::try_parse_from(["promptassist", "suggest", "--step", "subjects", "--input", "school"]).is_ok());
        assert!(Cli::try_parse_from(["promptassist", "suggest", "--step", "colour"]).is_err());
        assert!(
            Cli::try_parse_from(["promptassist", "wizard", "--backend", "http://x", "--fixtures", "f.json"]).is_err()
        );
    }

    #[tokio::test]
    async fn typed_walkthrough_needs_no_backend() {
        let mut wizard = ScriptedWizard::new(Config {
            deterministic: true,
            ..Config::default()
        });
        let cancel = CancellationToken::new();
        let mut sink = Vec::new();
        for line in ["type park", "type tree", "skip", "type a tree in a park", "skip"] {
            let cmd = parse_script_line(line).unwrap().unwrap();
            wizard.run(cmd, &cancel, &mut sink).await.unwrap();
        }
        let mut out = Vec::new();
        assert_eq!(wizard.finish(&mut out).unwrap(), "a tree in a park");
        let out = String::from_utf8(out).unwrap();
        assert_eq!(out.lines().last(), Some("a tree in a park"));
        assert!(out.contains("savings ratio: 0.000"));

        let f = wizard
            .run(ScriptCommand::Suggest { more: false }, &cancel, &mut sink)
            .await
            .unwrap_err();
        assert_eq!(f.code, EXIT_USAGE);
    }
}

//! Suggestion engine: render, generate, parse, dedup, repeat.
//!
//! A [`SuggestionEngine`] is shared; each wizard session owns a
//! [`SuggestionState`] holding its cache and the attempt cursors that make
//! "more suggestions" ask the backend for fresh completions.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use futures::future::join_all;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio_util::sync::CancellationToken;

use crate::llm::{
    DEFAULT_LIST_MAX_TOKENS, DEFAULT_SCENE_MAX_TOKENS, DEFAULT_TEMPERATURE, GenerationRequest,
    LlmClient, LlmError, PromptDigest, normalize_digest,
};
use crate::parser::{ParseError, normalize_key, parse_for_grammar};
use crate::wizard::Step;
use crate::templates::{RenderedPrompt, TemplateError, TemplateId, TemplateRegistry, join_words};

/// Style presets offered at the style step. No template exists for styles,
/// so these are fixed rather than generated.
pub const STYLE_PRESETS: &[&str] = &["photograph", "pencil drawing", "oil painting", "watercolor painting"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuggestStep {
    Environment,
    Subjects,
    Actions,
    Scene,
    Synonyms,
    Style,
}

impl SuggestStep {
    pub const ALL: [SuggestStep; 6] = [
        SuggestStep::Environment,
        SuggestStep::Subjects,
        SuggestStep::Actions,
        SuggestStep::Scene,
        SuggestStep::Synonyms,
        SuggestStep::Style,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SuggestStep::Environment => "environment",
            SuggestStep::Subjects => "subjects",
            SuggestStep::Actions => "actions",
            SuggestStep::Scene => "scene",
            SuggestStep::Synonyms => "synonyms",
            SuggestStep::Style => "style",
        }
    }

    /// The suggestions offered at a wizard step, if any.
    pub fn for_wizard_step(step: Step) -> Option<Self> {
        match step {
            Step::Environment => Some(SuggestStep::Environment),
            Step::Subjects => Some(SuggestStep::Subjects),
            Step::Actions => Some(SuggestStep::Actions),
            Step::Scene => Some(SuggestStep::Scene),
            Step::Style => Some(SuggestStep::Style),
            Step::Done => None,
        }
    }
}

impl fmt::Display for SuggestStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SuggestStep {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SuggestStep::ALL
            .into_iter()
            .find(|step| step.as_str() == s)
            .ok_or_else(|| format!("unknown suggestion step `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuggestionQuery {
    pub step: SuggestStep,
    /// Environment name, subjects, scene words, or the word to replace.
    #[serde(default)]
    pub inputs: Vec<String>,
    /// Falls back to the engine's per-step default.
    #[serde(default)]
    pub min_count: Option<usize>,
    #[serde(default)]
    pub exclude: Vec<String>,
}

impl SuggestionQuery {
    pub fn new<S: Into<String>>(step: SuggestStep, inputs: impl IntoIterator<Item = S>) -> Self {
        Self {
            step,
            inputs: inputs.into_iter().map(Into::into).collect(),
            min_count: None,
            exclude: Vec::new(),
        }
    }

    pub fn min_count(mut self, n: usize) -> Self {
        self.min_count = Some(n);
        self
    }

    pub fn exclude<S: Into<String>>(mut self, items: impl IntoIterator<Item = S>) -> Self {
        self.exclude.extend(items.into_iter().map(Into::into));
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuggestionSet {
    pub items: Vec<String>,
    /// Set when the attempt budget ran out before `min_count` was reached.
    pub exhausted: bool,
    pub attempts_used: u32,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SuggestError {
    #[error("invalid suggestion query: {0}")]
    InvalidQuery(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("suggestion request was cancelled")]
    Cancelled,
    #[error(transparent)]
    Backend(LlmError),
    #[error("the model produced no usable suggestions")]
    NoSuggestions,
}

impl From<LlmError> for SuggestError {
    fn from(e: LlmError) -> Self {
        match e {
            LlmError::Cancelled => SuggestError::Cancelled,
            other => SuggestError::Backend(other),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuggestConfig {
    /// Generate calls (rounds, for multi-subject actions) per list query.
    pub attempt_budget: u32,
    /// Environment harvesting may spend `factor * min_count` calls.
    pub environment_budget_factor: u32,
    pub default_min_count: usize,
    pub scene_min_count: usize,
    pub style_min_count: usize,
    pub max_items_per_completion: usize,
    pub temperature: f32,
    pub list_max_tokens: u32,
    pub scene_max_tokens: u32,
}

impl Default for SuggestConfig {
    fn default() -> Self {
        Self {
            attempt_budget: 3,
            environment_budget_factor: 2,
            default_min_count: 10,
            scene_min_count: 3,
            style_min_count: 1,
            max_items_per_completion: 50,
            temperature: DEFAULT_TEMPERATURE,
            list_max_tokens: DEFAULT_LIST_MAX_TOKENS,
            scene_max_tokens: DEFAULT_SCENE_MAX_TOKENS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct CacheKey {
    step: SuggestStep,
    inputs: Vec<String>,
    exclude: Vec<String>,
    min_count: usize,
}

/// Per-session cache and attempt cursors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SuggestionState {
    cache: HashMap<CacheKey, SuggestionSet>,
    cursors: HashMap<PromptDigest, u32>,
}

impl SuggestionState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cache_len(&self) -> usize {
        self.cache.len()
    }
}

/// How one generate call's output is consumed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Harvest {
    /// Each round calls every prompt once and reads a list from each.
    Lists,
    /// Each call yields one value; calls for missing items go out together.
    OnePerCall,
}

struct Plan {
    prompts: Vec<RenderedPrompt>,
    harvest: Harvest,
    budget: u32,
    max_tokens: u32,
}

#[derive(Debug, Clone)]
pub struct SuggestionEngine {
    client: LlmClient,
    templates: TemplateRegistry,
    config: SuggestConfig,
}

impl SuggestionEngine {
    pub fn new(client: LlmClient, templates: TemplateRegistry, config: SuggestConfig) -> Self {
        Self {
            client,
            templates,
            config,
        }
    }

    pub fn client(&self) -> &LlmClient {
        &self.client
    }

    pub fn templates(&self) -> &TemplateRegistry {
        &self.templates
    }

    pub fn config(&self) -> &SuggestConfig {
        &self.config
    }

    pub fn resolved_min_count(&self, query: &SuggestionQuery) -> usize {
        query.min_count.unwrap_or(match query.step {
            SuggestStep::Scene => self.config.scene_min_count,
            SuggestStep::Style => self.config.style_min_count,
            _ => self.config.default_min_count,
        })
    }

    fn cache_key(&self, query: &SuggestionQuery) -> CacheKey {
        let mut exclude: Vec<String> = query.exclude.iter().map(|e| normalize_key(e)).collect();
        exclude.sort();
        exclude.dedup();
        CacheKey {
            step: query.step,
            inputs: query.inputs.iter().map(|i| i.trim().to_string()).collect(),
            exclude,
            min_count: self.resolved_min_count(query),
        }
    }

    /// A set previously served to this session for an identical query.
    pub fn cached<'a>(&self, state: &'a SuggestionState, query: &SuggestionQuery) -> Option<&'a SuggestionSet> {
        state.cache.get(&self.cache_key(query))
    }

    fn plan(&self, query: &SuggestionQuery, min_count: usize) -> Result<Plan, SuggestError> {
        let inputs: Vec<&str> = query.inputs.iter().map(|s| s.trim()).collect();
        let render = |id: TemplateId, input: &[&str]| self.templates.get(id).render(input);
        let single = |what: &str| -> Result<&str, SuggestError> {
            match inputs.as_slice() {
                [one] if !one.is_empty() => Ok(one),
                _ => Err(SuggestError::InvalidQuery(format!("the {what} step needs exactly one input"))),
            }
        };
        let lists = |prompts| Plan {
            prompts,
            harvest: Harvest::Lists,
            budget: self.config.attempt_budget,
            max_tokens: self.config.list_max_tokens,
        };
        Ok(match query.step {
            SuggestStep::Environment => {
                if !inputs.is_empty() {
                    return Err(SuggestError::InvalidQuery("the environment step takes no inputs".into()));
                }
                Plan {
                    prompts: vec![render(TemplateId::EnvironmentSuggest, &[])?],
                    harvest: Harvest::OnePerCall,
                    budget: budget_for(min_count, self.config.environment_budget_factor),
                    max_tokens: self.config.list_max_tokens,
                }
            }
            SuggestStep::Subjects => lists(vec![render(
                TemplateId::SubjectsForEnvironment,
                &[single("subjects")?],
            )?]),
            SuggestStep::Synonyms => lists(vec![render(TemplateId::SynonymsForWord, &[single("synonyms")?])?]),
            SuggestStep::Actions => {
                if inputs.is_empty() {
                    return Err(SuggestError::InvalidQuery("the actions step needs at least one subject".into()));
                }
                let mut seen = HashSet::new();
                let prompts = inputs
                    .iter()
                    .filter(|s| seen.insert(normalize_key(s)))
                    .map(|s| render(TemplateId::ActionsForSubjects, &[s]))
                    .collect::<Result<Vec<_>, _>>()?;
                lists(prompts)
            }
            SuggestStep::Scene => {
                if inputs.is_empty() {
                    return Err(SuggestError::InvalidQuery("the scene step needs at least one word".into()));
                }
                let words = join_words(&inputs)?;
                Plan {
                    prompts: vec![render(TemplateId::SceneFromWords, &[&words])?],
                    harvest: Harvest::OnePerCall,
                    budget: budget_for(min_count, 1),
                    max_tokens: self.config.scene_max_tokens,
                }
            }
            SuggestStep::Style => unreachable!("style presets are not generated"),
        })
    }

    /// Collects at least the query's minimum count of unique suggestions not
    /// in `exclude`, within the attempt budget.
    ///
    /// On error or cancellation `state` is left exactly as it was.
    pub async fn suggest(
        &self,
        state: &mut SuggestionState,
        query: &SuggestionQuery,
        cancel: &CancellationToken,
    ) -> Result<SuggestionSet, SuggestError> {
        let min_count = self.resolved_min_count(query);
        if min_count == 0 {
            return Err(SuggestError::InvalidQuery("min_count must be at least 1".into()));
        }
        let key = self.cache_key(query);
        if let Some(hit) = state.cache.get(&key) {
            return Ok(hit.clone());
        }
        if cancel.is_cancelled() {
            return Err(SuggestError::Cancelled);
        }

        let mut seen: HashSet<String> = key.exclude.iter().cloned().collect();
        let set = if query.step == SuggestStep::Style {
            let items: Vec<String> = STYLE_PRESETS
                .iter()
                .filter(|s| seen.insert(normalize_key(s)))
                .map(|s| s.to_string())
                .collect();
            SuggestionSet {
                exhausted: items.len() < min_count,
                items,
                attempts_used: 0,
            }
        } else {
            let plan = self.plan(query, min_count)?;
            let mut cursors = state.cursors.clone();
            let set = self.run(&plan, min_count, &mut seen, &mut cursors, cancel).await?;
            state.cursors = cursors;
            set
        };
        state.cache.insert(key, set.clone());
        Ok(set)
    }

    /// Scene suggestions for a word list.
    pub async fn suggest_scenes<S: AsRef<str>>(
        &self,
        state: &mut SuggestionState,
        words: &[S],
        min_count: Option<usize>,
        exclude: &[String],
        cancel: &CancellationToken,
    ) -> Result<SuggestionSet, SuggestError> {
        let mut query = SuggestionQuery::new(SuggestStep::Scene, words.iter().map(|w| w.as_ref().to_string()))
            .exclude(exclude.iter().cloned());
        query.min_count = min_count;
        self.suggest(state, &query, cancel).await
    }

    async fn run(
        &self,
        plan: &Plan,
        min_count: usize,
        seen: &mut HashSet<String>,
        cursors: &mut HashMap<PromptDigest, u32>,
        cancel: &CancellationToken,
    ) -> Result<SuggestionSet, SuggestError> {
        let grammar_of = |p: &RenderedPrompt| self.templates.get(p.template_id).output_grammar();
        let mut items = Vec::new();
        let mut attempts_used = 0u32;
        let mut parsed_any = false;

        while items.len() < min_count && attempts_used < plan.budget {
            if cancel.is_cancelled() {
                return Err(SuggestError::Cancelled);
            }
            // one request per prompt (lists) or one per missing item
            let batch: Vec<&RenderedPrompt> = match plan.harvest {
                Harvest::Lists => plan.prompts.iter().collect(),
                Harvest::OnePerCall => {
                    let calls = (min_count - items.len()).min((plan.budget - attempts_used) as usize);
                    std::iter::repeat_n(&plan.prompts[0], calls).collect()
                }
            };
            let requests: Vec<GenerationRequest> = batch
                .iter()
                .map(|p| {
                    let cursor = cursors.entry(normalize_digest(&p.text)).or_insert(0);
                    let tag = *cursor;
                    *cursor += 1;
                    GenerationRequest {
                        prompt_text: p.text.clone(),
                        max_tokens: plan.max_tokens,
                        temperature: self.config.temperature,
                        stop_sequences: self.templates.get(p.template_id).stop_sequences().to_vec(),
                        attempt_tag: tag,
                    }
                })
                .collect();
            let completions = join_all(requests.iter().map(|r| self.client.generate(r, cancel))).await;
            attempts_used += match plan.harvest {
                Harvest::Lists => 1,
                Harvest::OnePerCall => batch.len() as u32,
            };

            let mut lists = Vec::with_capacity(batch.len());
            for (prompt, completion) in batch.iter().zip(completions) {
                let completion = completion?;
                let text = completion.text_for_parsing()?;
                match parse_for_grammar(grammar_of(prompt), text, self.config.max_items_per_completion) {
                    Ok(list) => {
                        parsed_any = true;
                        lists.push(list);
                    }
                    Err(ParseError::NoSuggestions) => {
                        tracing::debug!(template = %prompt.template_id, "completion had no suggestions");
                    }
                    Err(ParseError::InvalidMaxItems) => {
                        return Err(SuggestError::InvalidQuery("max_items_per_completion must be at least 1".into()));
                    }
                }
            }
            for item in interleave(lists) {
                if seen.insert(normalize_key(&item)) {
                    items.push(item);
                }
            }
        }

        if !parsed_any {
            return Err(SuggestError::NoSuggestions);
        }
        Ok(SuggestionSet {
            exhausted: items.len() < min_count,
            items,
            attempts_used,
        })
    }
}

fn budget_for(min_count: usize, factor: u32) -> u32 {
    u32::try_from(min_count).unwrap_or(u32::MAX).saturating_mul(factor.max(1))
}

/// Round-robin merge: first items of every list, then second items, ...
fn interleave(lists: Vec<Vec<String>>) -> Vec<String> {
    let longest = lists.iter().map(Vec::len).max().unwrap_or(0);
    let mut iters: Vec<_> = lists.into_iter().map(Vec::into_iter).collect();
    let mut out = Vec::new();
    for _ in 0..longest {
        out.extend(iters.iter_mut().filter_map(Iterator::next));
    }
    out
}

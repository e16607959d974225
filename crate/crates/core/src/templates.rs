//! Few-shot prompt templates and their rendering.
//!
//! Each template is a block of worked `label: value` examples that ends at an
//! open label. The language model continues the pattern and the text it
//! produces is read back by [`crate::parser`] according to the template's
//! [`OutputGrammar`].

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Marker replaced by a user-supplied value.
pub const INPUT_MARKER: &str = "<input>";
/// Marker for the position the model's output continues from.
pub const OUTPUT_MARKER: &str = "<output>";

const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    EnvironmentSuggest,
    SubjectsForEnvironment,
    ActionsForSubjects,
    SceneFromWords,
    SynonymsForWord,
}

impl TemplateId {
    pub const ALL: [TemplateId; 5] = [
        TemplateId::EnvironmentSuggest,
        TemplateId::SubjectsForEnvironment,
        TemplateId::ActionsForSubjects,
        TemplateId::SceneFromWords,
        TemplateId::SynonymsForWord,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::EnvironmentSuggest => "environment_suggest",
            TemplateId::SubjectsForEnvironment => "subjects_for_environment",
            TemplateId::ActionsForSubjects => "actions_for_subjects",
            TemplateId::SceneFromWords => "scene_from_words",
            TemplateId::SynonymsForWord => "synonyms_for_word",
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateId {
    type Err = TemplateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TemplateId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| TemplateError::UnknownTemplate(s.to_string()))
    }
}

/// Shape of the text a template asks the model to produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputGrammar {
    SingleValue,
    CommaList,
    SceneText,
}

impl OutputGrammar {
    /// Stop sequences used by the builtin templates of this grammar.
    pub fn default_stop_sequences(self) -> Vec<String> {
        match self {
            OutputGrammar::SingleValue | OutputGrammar::CommaList => vec!["\n".to_string()],
            OutputGrammar::SceneText => vec!["\nwords:".to_string(), "\n\n".to_string()],
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template {template} expects {expected} input(s) but got {actual}")]
    ArityMismatch {
        template: TemplateId,
        expected: usize,
        actual: usize,
    },
    #[error("input {index} is empty")]
    EmptyInput { index: usize },
    #[error("input {index} is not usable in a prompt: {reason}")]
    InvalidInput { index: usize, reason: &'static str },
    #[error("word list is empty")]
    EmptyList,
    #[error("unknown template id `{0}`")]
    UnknownTemplate(String),
    #[error("template {template} is malformed: {reason}")]
    Malformed { template: TemplateId, reason: String },
    #[error("template pack is incomplete, missing {0}")]
    MissingTemplate(TemplateId),
    #[error("failed to read template pack: {0}")]
    Io(String),
}

/// A few-shot template with its slot layout and output contract.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Template {
    id: TemplateId,
    body: String,
    input_arity: usize,
    output_grammar: OutputGrammar,
    stop_sequences: Vec<String>,
}

impl Template {
    /// Builds a template, checking that the body's markers match the arity
    /// and that the output marker closes the body.
    pub fn new(
        id: TemplateId,
        body: impl Into<String>,
        input_arity: usize,
        output_grammar: OutputGrammar,
        stop_sequences: Vec<String>,
    ) -> Result<Self, TemplateError> {
        let body = body.into();
        let malformed = |reason: String| TemplateError::Malformed {
            template: id,
            reason,
        };
        let inputs = body.matches(INPUT_MARKER).count();
        if inputs != input_arity {
            return Err(malformed(format!(
                "body has {inputs} input marker(s), arity is {input_arity}"
            )));
        }
        if body.matches(OUTPUT_MARKER).count() != 1 {
            return Err(malformed("body needs exactly one output marker".into()));
        }
        if !body.trim_end().ends_with(OUTPUT_MARKER) {
            return Err(malformed("output marker must close the body".into()));
        }
        if stop_sequences.is_empty() || stop_sequences.iter().any(String::is_empty) {
            return Err(malformed("stop sequences must be non-empty".into()));
        }
        Ok(Self {
            id,
            body,
            input_arity,
            output_grammar,
            stop_sequences,
        })
    }

    pub fn id(&self) -> TemplateId {
        self.id
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    pub fn input_arity(&self) -> usize {
        self.input_arity
    }

    pub fn output_grammar(&self) -> OutputGrammar {
        self.output_grammar
    }

    pub fn stop_sequences(&self) -> &[String] {
        &self.stop_sequences
    }

    /// Substitutes `inputs` into the input slots, in order, and cuts the body
    /// at the label that precedes the output marker.
    pub fn render<S: AsRef<str>>(&self, inputs: &[S]) -> Result<RenderedPrompt, TemplateError> {
        if inputs.len() != self.input_arity {
            return Err(TemplateError::ArityMismatch {
                template: self.id,
                expected: self.input_arity,
                actual: inputs.len(),
            });
        }
        let cleaned = inputs
            .iter()
            .enumerate()
            .map(|(index, input)| clean_input(index, input.as_ref()))
            .collect::<Result<Vec<_>, _>>()?;

        let open = self.open_body();
        let mut text = String::with_capacity(open.len() + 32);
        let mut pieces = open.split(INPUT_MARKER);
        // split yields arity + 1 pieces, guaranteed by the constructor
        text.push_str(pieces.next().unwrap_or_default());
        for (piece, input) in pieces.zip(&cleaned) {
            text.push_str(input);
            text.push_str(piece);
        }

        Ok(RenderedPrompt {
            template_id: self.id,
            text,
            inputs: cleaned,
        })
    }

    /// The body up to, but excluding, the output marker and the whitespace
    /// separating it from its label.
    pub fn open_body(&self) -> &str {
        let cut = self.body.rfind(OUTPUT_MARKER).unwrap_or(self.body.len());
        self.body[..cut].trim_end_matches([' ', '\t'])
    }
}

fn clean_input(index: usize, input: &str) -> Result<String, TemplateError> {
    let trimmed = input.trim();
    if trimmed.is_empty() {
        return Err(TemplateError::EmptyInput { index });
    }
    if trimmed.contains(['\n', '\r']) {
        return Err(TemplateError::InvalidInput {
            index,
            reason: "contains a line break",
        });
    }
    if trimmed.contains(INPUT_MARKER) || trimmed.contains(OUTPUT_MARKER) {
        return Err(TemplateError::InvalidInput {
            index,
            reason: "contains a template marker",
        });
    }
    Ok(trimmed.to_string())
}

/// Prompt text ready to be sent to a backend.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub template_id: TemplateId,
    pub text: String,
    pub inputs: Vec<String>,
}

/// Joins a word list the way the scene template's examples lay it out.
pub fn join_words<S: AsRef<str>>(words: &[S]) -> Result<String, TemplateError> {
    if words.is_empty() {
        return Err(TemplateError::EmptyList);
    }
    let cleaned = words
        .iter()
        .enumerate()
        .map(|(index, w)| {
            let w = w.as_ref().trim();
            if w.is_empty() {
                Err(TemplateError::EmptyInput { index })
            } else {
                Ok(w)
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(cleaned.join(", "))
}

/// The five builtin templates, in workflow order.
pub fn builtin_templates() -> Vec<Template> {
    let spec: [(TemplateId, &str, usize, OutputGrammar); 5] = [
        (
            TemplateId::EnvironmentSuggest,
            include_str!("../templates/environment_suggest.txt"),
            0,
            OutputGrammar::SingleValue,
        ),
        (
            TemplateId::SubjectsForEnvironment,
            include_str!("../templates/subjects_for_environment.txt"),
            1,
            OutputGrammar::CommaList,
        ),
        (
            TemplateId::ActionsForSubjects,
            include_str!("../templates/actions_for_subjects.txt"),
            1,
            OutputGrammar::CommaList,
        ),
        (
            TemplateId::SceneFromWords,
            include_str!("../templates/scene_from_words.txt"),
            1,
            OutputGrammar::SceneText,
        ),
        (
            TemplateId::SynonymsForWord,
            include_str!("../templates/synonyms_for_word.txt"),
            1,
            OutputGrammar::CommaList,
        ),
    ];
    spec.into_iter()
        .map(|(id, body, arity, grammar)| {
            Template::new(id, body, arity, grammar, grammar.default_stop_sequences())
                .expect("builtin templates are well-formed")
        })
        .collect()
}

/// Templates indexed by id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateRegistry {
    templates: BTreeMap<TemplateId, Template>,
}

impl Default for TemplateRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl TemplateRegistry {
    pub fn builtin() -> Self {
        Self::from_templates(builtin_templates()).expect("builtin set is complete")
    }

    /// Requires one template for every [`TemplateId`].
    pub fn from_templates(templates: Vec<Template>) -> Result<Self, TemplateError> {
        let templates: BTreeMap<_, _> = templates.into_iter().map(|t| (t.id, t)).collect();
        if let Some(missing) = TemplateId::ALL.into_iter().find(|id| !templates.contains_key(id)) {
            return Err(TemplateError::MissingTemplate(missing));
        }
        Ok(Self { templates })
    }

    pub fn get(&self, id: TemplateId) -> &Template {
        &self.templates[&id]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Template> {
        self.templates.values()
    }

    /// Loads a template pack directory: a `manifest.toml` plus one body file
    /// per template.
    ///
    /// ```toml
    /// [[template]]
    /// id = "subjects_for_environment"
    /// file = "subjects_for_environment.txt"
    /// input_arity = 1
    /// output_grammar = "comma_list"
    /// stop_sequences = ["\n"]
    /// ```
    pub fn load_pack(dir: &Path) -> Result<Self, TemplateError> {
        let io = |e: std::io::Error| TemplateError::Io(e.to_string());
        let manifest = fs::read_to_string(dir.join(MANIFEST_FILE)).map_err(io)?;
        let manifest: PackManifest =
            toml::from_str(&manifest).map_err(|e| TemplateError::Io(e.to_string()))?;
        let templates = manifest
            .template
            .into_iter()
            .map(|entry| {
                let id = entry.id.parse::<TemplateId>()?;
                let body = fs::read_to_string(dir.join(&entry.file)).map_err(io)?;
                let stops = entry
                    .stop_sequences
                    .unwrap_or_else(|| entry.output_grammar.default_stop_sequences());
                // editors like to append a final newline
                Template::new(
                    id,
                    body.trim_end().to_string(),
                    entry.input_arity,
                    entry.output_grammar,
                    stops,
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_templates(templates)
    }

    /// Writes the registry as a template pack that [`Self::load_pack`] reads back.
    pub fn write_pack(&self, dir: &Path) -> Result<(), TemplateError> {
        let io = |e: std::io::Error| TemplateError::Io(e.to_string());
        fs::create_dir_all(dir).map_err(io)?;
        let mut manifest = PackManifest {
            template: Vec::new(),
        };
        for t in self.iter() {
            let file = format!("{}.txt", t.id);
            fs::write(dir.join(&file), &t.body).map_err(io)?;
            manifest.template.push(PackEntry {
                id: t.id.to_string(),
                file,
                input_arity: t.input_arity,
                output_grammar: t.output_grammar,
                stop_sequences: Some(t.stop_sequences.clone()),
            });
        }
        let text = toml::to_string_pretty(&manifest).map_err(|e| TemplateError::Io(e.to_string()))?;
        fs::write(dir.join(MANIFEST_FILE), text).map_err(io)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PackManifest {
    template: Vec<PackEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PackEntry {
    id: String,
    file: String,
    input_arity: usize,
    output_grammar: OutputGrammar,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stop_sequences: Option<Vec<String>>,
}

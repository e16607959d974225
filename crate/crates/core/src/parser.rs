//! Turns raw completions into suggestion lists, single values, and scenes.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::templates::OutputGrammar;

const LIST_LABELS: &[&str] = &["Suggestions:", "verbs:", "replacements"];
const VALUE_LABELS: &[&str] = &["Suggestion:", "Name:"];
const SCENE_STOPS: &[&str] = &["\nwords:", "\n\n"];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("the completion contained no usable suggestion")]
    NoSuggestions,
    #[error("max_items must be at least 1")]
    InvalidMaxItems,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedSuggestions {
    pub items: Vec<String>,
    pub truncated: bool,
    pub raw: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedScene {
    pub text: String,
    pub raw: String,
}

/// Comparison key for suggestions: trimmed, internal whitespace collapsed,
/// lowercased.
pub fn normalize_key(s: &str) -> String {
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

fn first_content_line(raw: &str) -> &str {
    raw.lines().find(|l| !l.trim().is_empty()).unwrap_or("")
}

pub fn parse_comma_list(raw: &str, max_items: usize) -> Result<ParsedSuggestions, ParseError> {
    if max_items == 0 {
        return Err(ParseError::InvalidMaxItems);
    }
    let mut line = first_content_line(raw).trim_start();
    if let Some(label) = LIST_LABELS.iter().find(|l| line.starts_with(**l)) {
        line = &line[label.len()..];
    }

    let mut seen = HashSet::new();
    let mut items = Vec::new();
    let mut truncated = false;
    for piece in line.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if !seen.insert(normalize_key(piece)) {
            continue;
        }
        if items.len() == max_items {
            truncated = true;
            break;
        }
        items.push(piece.to_string());
    }

    if items.is_empty() {
        return Err(ParseError::NoSuggestions);
    }
    Ok(ParsedSuggestions {
        items,
        truncated,
        raw: raw.to_string(),
    })
}

pub fn parse_single_value(raw: &str) -> Result<String, ParseError> {
    let mut line = first_content_line(raw).trim();
    for label in VALUE_LABELS {
        if let Some(at) = line.find(label) {
            line = line[at + label.len()..].trim();
            break;
        }
    }
    if line.is_empty() {
        Err(ParseError::NoSuggestions)
    } else {
        Ok(line.to_string())
    }
}

pub fn parse_scene(raw: &str) -> Result<ParsedScene, ParseError> {
    let normalized = raw.replace("\r\n", "\n");
    let body = normalized.trim_start();
    let cut = SCENE_STOPS
        .iter()
        .filter_map(|stop| body.find(stop))
        .min()
        .unwrap_or(body.len());
    let text = body[..cut].split_whitespace().collect::<Vec<_>>().join(" ");
    let text = text.trim_end_matches(|c: char| c == ',' || c.is_whitespace());
    if text.is_empty() {
        return Err(ParseError::NoSuggestions);
    }
    Ok(ParsedScene {
        text: text.to_string(),
        raw: raw.to_string(),
    })
}

/// Parses `raw` per `grammar`, always producing a list.
pub fn parse_for_grammar(
    grammar: OutputGrammar,
    raw: &str,
    max_items: usize,
) -> Result<Vec<String>, ParseError> {
    match grammar {
        OutputGrammar::CommaList => parse_comma_list(raw, max_items).map(|p| p.items),
        OutputGrammar::SingleValue => parse_single_value(raw).map(|v| vec![v]),
        OutputGrammar::SceneText => parse_scene(raw).map(|s| vec![s.text]),
    }
}

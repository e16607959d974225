mod common;

use common::crate_dir;
use promptassist::llm::{FixtureAuthoring, FixtureStore};
use promptassist::templates::{TemplateId, TemplateRegistry};

const LABELS: [&str; 9] = [
    "Name:",
    "Suggestion:",
    "Environment:",
    "Suggestions:",
    "word:",
    "verbs:",
    "words:",
    "scene:",
    "replacements",
];

/// Joins hard-wrapped lines back onto the labelled line they continue.
fn unwrap_lines(raw: &str) -> String {
    let mut out: Vec<String> = Vec::new();
    for line in raw.split('\n') {
        let line = line.trim_end_matches([' ', '\t', '\r']);
        if line.is_empty() {
            continue;
        }
        let starts_block = LABELS.iter().any(|l| line.starts_with(l));
        match out.last_mut() {
            Some(prev) if !starts_block => {
                prev.push(' ');
                prev.push_str(line.trim_start());
            }
            _ => out.push(line.to_string()),
        }
    }
    out.join("\n")
}

fn raw(id: TemplateId) -> String {
    std::fs::read_to_string(crate_dir().join(format!("tests/golden/{}.raw.txt", id.as_str()))).unwrap()
}

#[test]
fn builtin_bodies_equal_the_unwrapped_originals() {
    let registry = TemplateRegistry::builtin();
    for id in TemplateId::ALL {
        assert_eq!(registry.get(id).body(), unwrap_lines(&raw(id)), "{id}");
    }
}

#[test]
fn unwrapped_school_line_has_twelve_distinct_subjects() {
    let body = unwrap_lines(&raw(TemplateId::SubjectsForEnvironment));
    let line = body
        .lines()
        .skip_while(|l| *l != "Environment: school")
        .nth(1)
        .unwrap();
    let items: Vec<&str> = line.trim_start_matches("Suggestions:").split(',').map(str::trim).collect();
    assert_eq!(items.len(), 13);
    let mut distinct = items.clone();
    distinct.sort();
    distinct.dedup();
    assert_eq!(distinct.len(), 12);
    assert_eq!(items[0], "blackboard");
}

#[test]
fn rendering_fills_the_last_block_only() {
    let registry = TemplateRegistry::builtin();
    let cases = [
        (TemplateId::EnvironmentSuggest, vec![], "Name: environment\nSuggestion:"),
        (TemplateId::SubjectsForEnvironment, vec!["school"], "Environment: school\nSuggestions:"),
        (TemplateId::ActionsForSubjects, vec!["tree"], "word: tree\nverbs:"),
        (TemplateId::SceneFromWords, vec!["tree, bench"], "words: tree, bench\nscene:"),
        (TemplateId::SynonymsForWord, vec!["blue"], "word: blue\nreplacements"),
    ];
    for (id, inputs, tail) in cases {
        let text = registry.get(id).render(&inputs).unwrap().text;
        let body = unwrap_lines(&raw(id));
        let examples = body.rsplit_once('\n').unwrap().0;
        let examples = examples.rsplit_once('\n').map_or("", |(head, _)| head);
        assert!(text.starts_with(examples), "{id}: few-shot examples changed");
        assert!(text.ends_with(tail), "{id}: {text:?}");
        assert!(!text.contains("<input>") && !text.contains("<output>"));
    }
}

#[test]
fn checked_in_fixtures_match_their_authoring_file() {
    let toml = std::fs::read_to_string(crate_dir().join("fixtures/sample.toml")).unwrap();
    let authoring = FixtureAuthoring::from_toml(&toml).unwrap();
    let store = FixtureStore::from_authoring(&TemplateRegistry::builtin(), &authoring).unwrap();
    let checked_in = std::fs::read_to_string(crate_dir().join("fixtures/sample.json")).unwrap();
    assert_eq!(
        store.to_json(),
        checked_in,
        "regenerate with `cargo run --example author_fixtures -- fixtures/sample.toml fixtures/sample.json`"
    );
    assert_eq!(store.len(), authoring.entry.len());
}

//! Suggestion harvesting over the sample fixtures: a full list, an
//! exhausted one, "more suggestions" and the multi-subject action merge.

use std::path::Path;
use std::sync::Arc;

use promptassist::llm::{FixtureBackend, FixtureStore, LlmClient};
use promptassist::suggest::{
    SuggestConfig, SuggestError, SuggestStep, SuggestionEngine, SuggestionQuery, SuggestionSet, SuggestionState,
};
use promptassist::templates::TemplateRegistry;
use tokio_util::sync::CancellationToken;

pub fn engine() -> SuggestionEngine {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/sample.json");
    let store = Arc::new(FixtureStore::load(&path).expect("checked-in fixtures load"));
    SuggestionEngine::new(
        LlmClient::new(Arc::new(FixtureBackend::new(store))),
        TemplateRegistry::builtin(),
        SuggestConfig::default(),
    )
}

pub struct Results {
    pub school: SuggestionSet,
    pub blue: SuggestionSet,
    pub environments: SuggestionSet,
    pub more_environments: SuggestionSet,
    pub actions: SuggestionSet,
}

pub async fn run_example() -> Result<Results, SuggestError> {
    let engine = engine();
    let cancel = CancellationToken::new();
    let mut state = SuggestionState::new();

    let school = engine
        .suggest(&mut state, &SuggestionQuery::new(SuggestStep::Subjects, ["school"]), &cancel)
        .await?;
    let blue = engine
        .suggest(&mut state, &SuggestionQuery::new(SuggestStep::Synonyms, ["blue"]), &cancel)
        .await?;
    let first = SuggestionQuery::new(SuggestStep::Environment, Vec::<String>::new()).min_count(5);
    let environments = engine.suggest(&mut state, &first, &cancel).await?;
    let more = first.clone().exclude(environments.items.clone());
    let more_environments = engine.suggest(&mut state, &more, &cancel).await?;
    let actions = engine
        .suggest(&mut state, &SuggestionQuery::new(SuggestStep::Actions, ["tree", "bench"]), &cancel)
        .await?;
    Ok(Results {
        school,
        blue,
        environments,
        more_environments,
        actions,
    })
}

#[tokio::main]
async fn main() -> Result<(), SuggestError> {
    let r = run_example().await?;
    let show = |name: &str, set: &SuggestionSet| {
        println!("{name} ({} items, exhausted: {}): {}", set.items.len(), set.exhausted, set.items.join(", "));
    };
    show("school", &r.school);
    show("blue", &r.blue);
    show("environments", &r.environments);
    show("more", &r.more_environments);
    show("tree + bench actions", &r.actions);
    Ok(())
}

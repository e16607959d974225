//! Renders a TOML authoring file into the JSON fixture store.
//!
//! ```text
//! cargo run --example author_fixtures -- fixtures/sample.toml fixtures/sample.json
//! ```

use std::path::{Path, PathBuf};

use promptassist::llm::{FixtureAuthoring, FixtureStore, LlmError};
use promptassist::templates::TemplateRegistry;

/// Returns the fixture JSON for `toml_path` (built-in templates).
pub fn run_example(toml_path: &Path) -> Result<String, LlmError> {
    let text = std::fs::read_to_string(toml_path).map_err(|e| LlmError::Fixture(e.to_string()))?;
    let authoring = FixtureAuthoring::from_toml(&text)?;
    let store = FixtureStore::from_authoring(&TemplateRegistry::builtin(), &authoring)?;
    Ok(store.to_json())
}

fn main() -> Result<(), LlmError> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let mut args = std::env::args().skip(1);
    let input = args.next().map(PathBuf::from).unwrap_or_else(|| root.join("fixtures/sample.toml"));
    let json = run_example(&input)?;
    match args.next() {
        Some(out) => {
            FixtureStore::from_json(&json)?.save(Path::new(&out))?;
            eprintln!("wrote {out}");
        }
        None => print!("{json}"),
    }
    Ok(())
}

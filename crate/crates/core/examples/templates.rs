//! Renders every built-in few-shot template and round-trips a template pack.

use promptassist::templates::{TemplateError, TemplateId, TemplateRegistry};

fn sample_inputs(id: TemplateId) -> Vec<&'static str> {
    match id {
        TemplateId::EnvironmentSuggest => vec![],
        TemplateId::SubjectsForEnvironment => vec!["park"],
        TemplateId::ActionsForSubjects => vec!["bench"],
        TemplateId::SceneFromWords => vec!["tree, bench"],
        TemplateId::SynonymsForWord => vec!["green"],
    }
}

/// Returns `(template id, last line of the rendered prompt)` for each template.
pub fn run_example() -> Result<Vec<(TemplateId, String)>, TemplateError> {
    let registry = TemplateRegistry::builtin();
    let dir = tempfile::tempdir().map_err(|e| TemplateError::Io(e.to_string()))?;
    registry.write_pack(dir.path())?;
    let reloaded = TemplateRegistry::load_pack(dir.path())?;

    let mut tails = Vec::new();
    for template in reloaded.iter() {
        let rendered = template.render(&sample_inputs(template.id()))?;
        assert_eq!(rendered.text, registry.get(template.id()).render(&sample_inputs(template.id()))?.text);
        let tail = rendered.text.lines().last().unwrap_or_default().to_string();
        tails.push((template.id(), tail));
    }
    Ok(tails)
}

fn main() -> Result<(), TemplateError> {
    for (id, tail) in run_example()? {
        println!("{:<26} ...{tail}", id.as_str());
    }
    Ok(())
}

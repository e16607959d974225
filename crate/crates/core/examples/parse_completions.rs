//! Turns raw completions into suggestion lists and scenes.

use promptassist::parser::{ParseError, parse_comma_list, parse_scene, parse_single_value};

pub struct Parsed {
    pub subjects: Vec<String>,
    pub subjects_truncated: bool,
    pub synonyms: Vec<String>,
    pub environment: String,
    pub scene: String,
}

pub fn run_example() -> Result<Parsed, ParseError> {
    // a hard-wrapped list with a repeated item
    let school = parse_comma_list(
        " blackboard, teacher, chair, book, student, class, eraser, whiteboard, notebook, pen, pencil, eraser, paper",
        10,
    )?;
    let blue = parse_comma_list("replacements red, pink, orange, yellow, purple, green, brown\nword: small", 50)?;
    let environment = parse_single_value(" park\nName: environment")?;
    // the model kept going into the next few-shot block
    let scene = parse_scene(
        " A young man is sitting on a bench near a small tree.  He is wearing a green pullover,\nwords: dog",
    )?;
    Ok(Parsed {
        subjects: school.items,
        subjects_truncated: school.truncated,
        synonyms: blue.items,
        environment,
        scene: scene.text,
    })
}

fn main() -> Result<(), ParseError> {
    let p = run_example()?;
    println!("subjects ({}, truncated: {}): {}", p.subjects.len(), p.subjects_truncated, p.subjects.join(" | "));
    println!("synonyms: {}", p.synonyms.join(" | "));
    println!("environment: {}", p.environment);
    println!("scene: {}", p.scene);
    Ok(())
}

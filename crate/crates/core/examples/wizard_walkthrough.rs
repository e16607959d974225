//! Builds the park/bench prompt by clicking suggestions only, then replaces
//! a word and prints the effort report.

use chrono::{DateTime, Utc};
use promptassist::wizard::{Action, AssembledPrompt, AssemblyOptions, Session, SessionId, Step, WizardError};
use uuid::Uuid;

pub const SCENE: &str = "A young man is sitting on a bench near a small tree. He is wearing a green pullover";

pub fn run_example() -> Result<(AssembledPrompt, AssembledPrompt), WizardError> {
    let t0 = DateTime::<Utc>::from_timestamp(1_704_067_200, 0).expect("valid timestamp");
    let mut session = Session::new(SessionId(Uuid::from_u128(1)), t0);
    let accept = |step, text: &str, advance| Action::Accept {
        step,
        text: text.into(),
        advance,
    };
    for action in [
        accept(Step::Environment, "park", true),
        accept(Step::Subjects, "tree", false),
        accept(Step::Subjects, "bench", true),
        Action::Skip { step: Step::Actions },
        accept(Step::Scene, SCENE, true),
        accept(Step::Style, "oil painting", true),
    ] {
        session.apply(action, t0)?;
    }
    let options = AssemblyOptions::default();
    let first = session.assemble(options, t0)?;

    session.apply(
        Action::ReplaceWord {
            target: "small".into(),
            replacement: "tiny".into(),
        },
        t0,
    )?;
    let second = session.assemble(options, t0)?;
    Ok((first, second))
}

fn main() -> Result<(), WizardError> {
    let (first, second) = run_example()?;
    for prompt in [first, second] {
        let e = &prompt.effort;
        println!("{}", prompt.text);
        println!(
            "  typed {} / clicks {} / {} chars / savings {:.3}",
            e.typed_keystrokes, e.pointer_actions, e.prompt_chars, e.savings_ratio
        );
    }
    Ok(())
}

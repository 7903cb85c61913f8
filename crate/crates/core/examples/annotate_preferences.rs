//! Attach a generated preference to each prompt: a profession is drawn from
//! the built-in catalog and the policy writes a preference in that voice,
//! optionally revising its own draft.
//!
//! ```bash
//! cargo run -p prs-core --example annotate_preferences
//! ```

use prs_core::backends::{AssembledPrompt, ContextKind, Generation, GenerationBackend};
use prs_core::cli::Annotator;
use prs_core::templates::builtin_catalog;
use prs_core::types::Usage;
use prs_core::{DecodeParams, PromptRecord, TemplateSet};

/// Answers annotation prompts with a canned preference.
struct Canned;

impl GenerationBackend for Canned {
    fn generate(&self, prompt: &AssembledPrompt, _: &DecodeParams) -> prs_core::Result<Generation> {
        let text = match prompt.context_kind {
            ContextKind::RevisePreference => "I want concrete numbers and a one-line summary at the end.",
            _ => "I want concrete numbers.",
        };
        Ok(Generation { text: text.into(), usage: Usage::default(), attempts: 1 })
    }

    fn identity(&self) -> serde_json::Value {
        serde_json::json!({"kind": "canned"})
    }
}

pub fn run() -> prs_core::Result<()> {
    let templates = TemplateSet::instruction_following();
    let catalog = builtin_catalog("professions")?;
    let annotator = Annotator {
        templates: &templates,
        generator: &Canned,
        catalog: &catalog,
        decode: DecodeParams::default(),
        seed: 42,
        revise: true,
    };
    for i in 0..3 {
        let record = PromptRecord::new(format!("q{i}"), "How should I plan a weekly budget?");
        let done = annotator.annotate(&record)?;
        println!(
            "{} [{}] {}",
            done.id,
            done.meta["profession"],
            done.preference.unwrap_or_default()
        );
    }
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

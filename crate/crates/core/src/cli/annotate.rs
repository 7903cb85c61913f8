use std::collections::HashMap;
use std::path::{Path, PathBuf};

use clap::Args;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use super::sample::load_prompts;
use super::settings::{in_dir, BackendFlags, Settings};
use crate::backends::GenerationBackend;
use crate::error::{Error, Result};
use crate::ids::keyed_seed;
use crate::jsonl;
use crate::templates::{builtin_catalog, load_preference_catalog, TemplateSet};
use crate::types::{DecodeParams, PromptRecord};

pub const ANNOTATED_FILE: &str = "prompts.jsonl";
pub const FAILED_FILE: &str = "annotate_failed.json";

#[derive(Debug, Clone, Args)]
pub struct AnnotateArgs {
    /// Prompt records lacking preferences.
    #[arg(long)]
    pub prompts: PathBuf,
    /// Output file, or a directory to hold prompts.jsonl.
    #[arg(long)]
    pub out: PathBuf,
    /// Profession catalog; defaults to the built-in list.
    #[arg(long)]
    pub professions: Option<PathBuf>,
    /// Follow each annotation with a rewrite into a topic-independent
    /// preference.
    #[arg(long)]
    pub revise: bool,
    #[command(flatten)]
    pub backend: BackendFlags,
}

/// Profession for one prompt, drawn uniformly from the catalog.
pub fn assign_profession<'a>(catalog: &'a [String], seed: u64, prompt_id: &str) -> &'a str {
    let s = keyed_seed("profession", &[&seed.to_le_bytes(), prompt_id.as_bytes()]);
    let mut rng = ChaCha8Rng::seed_from_u64(s);
    &catalog[rng.random_range(0..catalog.len())]
}

pub struct Annotator<'a> {
    pub templates: &'a TemplateSet,
    pub generator: &'a dyn GenerationBackend,
    pub catalog: &'a [String],
    pub decode: DecodeParams,
    pub seed: u64,
    pub revise: bool,
}

impl Annotator<'_> {
    fn call(&self, tag: &str, id: &str, prompt: &crate::backends::AssembledPrompt) -> Result<String> {
        let s = keyed_seed(tag, &[&self.seed.to_le_bytes(), id.as_bytes()]);
        let text = self.generator.generate(prompt, &self.decode.with_seed(s))?.text;
        let text = text.trim();
        if text.is_empty() {
            return Err(Error::Backend(format!("empty preference for prompt {id}")));
        }
        Ok(text.to_string())
    }

    /// Returns the prompt with a generated preference and the profession in
    /// `meta`.
    pub fn annotate(&self, record: &PromptRecord) -> Result<PromptRecord> {
        let profession = assign_profession(self.catalog, self.seed, &record.id);
        let prompt = self.templates.assemble_annotation(record, profession)?;
        let mut preference = self.call("annotate", &record.id, &prompt)?;
        let mut out = record.clone();
        out.meta.insert("profession".into(), profession.to_string());
        if self.revise {
            let prompt = self.templates.assemble_revision(record, &preference, Some(profession))?;
            let revised = self.call("revise", &record.id, &prompt)?;
            out.meta.insert("preference_draft".into(), preference.clone());
            preference = revised;
        }
        out.preference = Some(preference);
        Ok(out)
    }
}

fn previous(out: &Path) -> Result<HashMap<String, PromptRecord>> {
    if !out.exists() {
        return Ok(HashMap::new());
    }
    Ok(jsonl::read_jsonl::<PromptRecord>(out)?
        .into_iter()
        .filter(|p| p.preference_text().is_some())
        .map(|p| (p.id.clone(), p))
        .collect())
}

pub fn cmd_annotate_preferences(mut settings: Settings, args: &AnnotateArgs) -> Result<Value> {
    settings.apply_backend(&args.backend);
    let out = in_dir(&args.out, ANNOTATED_FILE);
    let failed_path = out.with_file_name(FAILED_FILE);
    let (prompts, _) = load_prompts(&args.prompts)?;
    let catalog = match &args.professions {
        Some(p) => load_preference_catalog(p)?,
        None => builtin_catalog("professions")?,
    };
    let templates = settings.templates()?;
    let generator = settings.generator()?;
    let annotator = Annotator {
        templates: &templates,
        generator: generator.as_ref(),
        catalog: &catalog,
        decode: settings.sampling_config()?.decode,
        seed: settings.seed,
        revise: args.revise,
    };
    let done = previous(&out)?;
    let results: Vec<(PromptRecord, Option<Error>, bool)> = settings.install(|| {
        prompts
            .par_iter()
            .map(|p| {
                if p.preference_text().is_some() {
                    return (p.clone(), None, false);
                }
                if let Some(prev) = done.get(&p.id) {
                    return (prev.clone(), None, false);
                }
                match annotator.annotate(p) {
                    Ok(a) => (a, None, true),
                    Err(e) => (p.clone(), Some(e), false),
                }
            })
            .collect()
    })?;
    let records: Vec<PromptRecord> = results.iter().map(|r| r.0.clone()).collect();
    jsonl::write_jsonl(&out, &records)?;
    let annotated = results.iter().filter(|r| r.2).count();
    let failures: Vec<Value> = results
        .iter()
        .filter_map(|(p, e, _)| e.as_ref().map(|e| json!({"id": p.id, "error": e.to_string()})))
        .collect();
    if failures.is_empty() {
        if failed_path.exists() {
            std::fs::remove_file(&failed_path).map_err(|e| Error::io(&failed_path, e))?;
        }
        return Ok(json!({ "annotated": annotated, "prompts": records.len(), "out": out }));
    }
    let body = serde_json::to_string_pretty(&json!({ "failed": failures }))?;
    jsonl::write_atomic(&failed_path, body.as_bytes())?;
    eprintln!(
        "{} of {} prompts failed; ids listed in {}; rerun to resume",
        failures.len(),
        records.len(),
        failed_path.display()
    );
    Err(results
        .into_iter()
        .find_map(|r| r.1)
        .expect("at least one failure"))
}

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use clap::Args;
use rayon::prelude::*;
use serde_json::{json, Value};

use super::manifest::{RunManifest, MANIFEST_FILE};
use super::settings::{BackendFlags, SamplingFlags, Settings};
use crate::error::{Error, Result};
use crate::jsonl::{self, Journal};
use crate::samplers::Sampler;
use crate::types::{LedgerSnapshot, Method, PromptRecord, SampleTree, SamplingConfig};

pub const TREES_FILE: &str = "trees.jsonl";
pub const JOURNAL_FILE: &str = "trees.journal.jsonl";

#[derive(Debug, Clone, Args)]
pub struct SampleArgs {
    /// JSONL file of prompt records.
    #[arg(long)]
    pub prompts: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Continue an interrupted run in `--out`, skipping completed trees.
    #[arg(long)]
    pub resume: bool,
    #[command(flatten)]
    pub sampling: SamplingFlags,
    #[command(flatten)]
    pub backend: BackendFlags,
}

/// Reads a prompt file and returns the records with the raw bytes (for the
/// manifest digest). Ids must be unique.
pub fn load_prompts(path: &Path) -> Result<(Vec<PromptRecord>, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let prompts: Vec<PromptRecord> = jsonl::read_jsonl(path)?;
    if prompts.is_empty() {
        return Err(Error::Data(format!("{}: no prompts", path.display())));
    }
    let mut seen = HashSet::new();
    for p in &prompts {
        p.validate()?;
        if !seen.insert(p.id.as_str()) {
            return Err(Error::Data(format!("duplicate prompt id {:?}", p.id)));
        }
    }
    Ok((prompts, bytes))
}

pub fn check_prand(method: Method, prompts: &[PromptRecord]) -> Result<()> {
    if method == Method::Prand {
        if let Some(p) = prompts.iter().find(|p| p.preference_text().is_none()) {
            return Err(Error::PrandRequiresPreference(p.id.clone()));
        }
    }
    Ok(())
}

pub fn load_trees(path: &Path) -> Result<Vec<SampleTree>> {
    jsonl::read_jsonl(&super::settings::in_dir(path, TREES_FILE))
}

fn prior_trees(out: &Path, manifest: &RunManifest) -> Result<HashMap<String, SampleTree>> {
    let mut prior = HashMap::new();
    if !out.join(MANIFEST_FILE).exists() {
        return Ok(prior);
    }
    let old = RunManifest::read(out)?;
    if old.digest() != manifest.digest() {
        return Err(Error::Config(format!(
            "cannot resume: {} describes a different run",
            out.join(MANIFEST_FILE).display()
        )));
    }
    let trees = out.join(TREES_FILE);
    if trees.exists() {
        for t in jsonl::read_jsonl::<SampleTree>(&trees)? {
            prior.insert(t.prompt.id.clone(), t);
        }
    }
    let journal = out.join(JOURNAL_FILE);
    if journal.exists() {
        // later entries supersede earlier ones
        for t in jsonl::read_journal::<SampleTree>(&journal)? {
            prior.insert(t.prompt.id.clone(), t);
        }
    }
    Ok(prior)
}

/// Samples every prompt into `out/trees.jsonl`.
///
/// Each finished or interrupted tree is appended to a journal as soon as it
/// is known, so an interrupted run can be resumed with `--resume`. The final
/// tree file is written in input order only once every tree is complete.
pub fn run_sampling(
    settings: &Settings,
    cfg: &SamplingConfig,
    prompts_path: &Path,
    out: &Path,
    resume: bool,
) -> Result<Vec<SampleTree>> {
    let (prompts, bytes) = load_prompts(prompts_path)?;
    check_prand(cfg.method, &prompts)?;
    let templates = settings.templates()?;
    let generator = settings.generator()?;
    let reward = settings.reward_backend()?;
    let manifest = RunManifest::new(
        "sample",
        cfg.clone(),
        generator.identity(),
        reward.identity(),
        templates.digest(),
        &bytes,
    );
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let journal_path = out.join(JOURNAL_FILE);
    let prior = if resume {
        prior_trees(out, &manifest)?
    } else {
        if journal_path.exists() {
            std::fs::remove_file(&journal_path).map_err(|e| Error::io(&journal_path, e))?;
        }
        HashMap::new()
    };
    if !resume || !out.join(MANIFEST_FILE).exists() {
        manifest.write(out)?;
    }
    let skipped = prior.values().filter(|t| t.is_complete()).count();
    if skipped > 0 {
        log::info!("resuming: {skipped} completed trees skipped");
    }

    let journal = Mutex::new(Journal::open(&journal_path)?);
    let sampler = Sampler::new(&templates, generator.as_ref(), reward.as_ref());
    let results: Vec<Result<std::result::Result<SampleTree, Box<_>>>> = settings.install(|| {
        prompts
            .par_iter()
            .map(|p| {
                let r = match prior.get(&p.id) {
                    Some(t) if t.is_complete() => return Ok(Ok(t.clone())),
                    Some(t) => sampler.resume(t.clone(), cfg),
                    None => sampler.run(p, cfg),
                };
                let tree = match &r {
                    Ok(t) => t,
                    Err(i) => &i.tree,
                };
                journal.lock().expect("journal lock").append(tree)?;
                Ok(r)
            })
            .collect()
    })?;

    let mut trees = Vec::with_capacity(results.len());
    let mut failed = Vec::new();
    let mut first_error = None;
    for r in results {
        match r? {
            Ok(t) => trees.push(t),
            Err(i) => {
                failed.push(i.tree.prompt.id.clone());
                first_error.get_or_insert(i.error);
            }
        }
    }
    if let Some(e) = first_error {
        eprintln!(
            "{} of {} trees incomplete ({}); rerun with --resume",
            failed.len(),
            prompts.len(),
            failed.join(", ")
        );
        return Err(e);
    }
    jsonl::write_jsonl(&out.join(TREES_FILE), &trees)?;
    std::fs::remove_file(&journal_path).map_err(|e| Error::io(&journal_path, e))?;
    Ok(trees)
}

pub fn ledger_total(trees: &[SampleTree]) -> LedgerSnapshot {
    let mut total = LedgerSnapshot::default();
    for t in trees {
        total += t.ledger.snapshot();
    }
    total
}

pub fn cmd_sample(mut settings: Settings, args: &SampleArgs) -> Result<Value> {
    settings.apply_sampling(&args.sampling);
    settings.apply_backend(&args.backend);
    let cfg = settings.sampling_config()?;
    let trees = run_sampling(&settings, &cfg, &args.prompts, &args.out, args.resume)?;
    Ok(json!({
        "trees": trees.len(),
        "candidates": trees.iter().map(SampleTree::num_candidates).sum::<usize>(),
        "ledger": ledger_total(&trees),
        "out": args.out.join(TREES_FILE),
    }))
}

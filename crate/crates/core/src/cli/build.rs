use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use clap::Args;
use serde_json::{json, Value};

use super::manifest::RunManifest;
use super::sample::{load_trees, TREES_FILE};
use super::settings::in_dir;
use crate::dataset::{
    build_iteration_dataset, emit_trainer_views, merge_iterations, write_merged, IterationDataset,
    MergedHeader, SftExample, PAIR_RULE,
};
use crate::error::{Error, Result};
use crate::ids::digest_hex;
use crate::jsonl;

pub const MERGED_FILE: &str = "merged.jsonl";

#[derive(Debug, Clone, Args)]
pub struct BuildArgs {
    /// Tree file (or sample output directory) for iteration K, as K=PATH.
    /// Repeat for more files or iterations.
    #[arg(long = "trees", value_name = "K=PATH", required = true)]
    pub trees: Vec<String>,
    /// Labeled JSONL examples ({instruction, response}) passed through as
    /// iteration 0.
    #[arg(long)]
    pub sft: Option<PathBuf>,
    /// Require every tree to have a refinement layer.
    #[arg(long)]
    pub pairs: bool,
    /// Accept inputs of one iteration produced by different runs.
    #[arg(long)]
    pub force: bool,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_source(s: &str) -> Result<(u32, PathBuf)> {
    let (k, p) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("--trees expects K=PATH, got {s:?}")))?;
    let k = k
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad iteration in {s:?}")))?;
    Ok((k, PathBuf::from(p)))
}

pub fn cmd_build_dataset(args: &BuildArgs) -> Result<Value> {
    let mut sources: BTreeMap<u32, Vec<PathBuf>> = BTreeMap::new();
    for s in &args.trees {
        let (k, p) = parse_source(s)?;
        sources.entry(k).or_default().push(in_dir(&p, TREES_FILE));
    }

    let mut iterations = Vec::new();
    let mut provenance = String::new();
    for (&k, paths) in &sources {
        let mut digests = BTreeSet::new();
        let mut trees = Vec::new();
        for p in paths {
            let d = RunManifest::beside(p)?.map_or_else(|| "none".to_string(), |m| m.digest());
            provenance.push_str(&format!("{k}:{d}\n"));
            digests.insert(d);
            trees.extend(load_trees(p)?);
        }
        if digests.len() > 1 && !args.force {
            return Err(Error::Data(format!(
                "iteration {k} mixes trees from {} different runs; pass --force to accept",
                digests.len()
            )));
        }
        if args.pairs {
            if let Some(t) = trees.iter().find(|t| t.layers.len() < 2) {
                log::error!("tree {} has no refinement layer", t.prompt.id);
                return Err(Error::NoRefinementLayer);
            }
        }
        iterations.push(IterationDataset {
            iteration: k,
            records: build_iteration_dataset(&trees, k)?,
        });
    }
    let sft = match &args.sft {
        Some(p) => Some(jsonl::read_jsonl::<SftExample>(p)?),
        None => None,
    };
    let merged = merge_iterations(iterations, sft)?;
    let counts = emit_trainer_views(&merged, &args.out)?;
    let header = MergedHeader {
        manifest_digest: digest_hex(provenance.as_bytes()),
        pair_rule: PAIR_RULE.to_string(),
        iterations: sources.keys().copied().collect(),
        records: merged.len(),
    };
    write_merged(&args.out.join(MERGED_FILE), &header, &merged)?;
    Ok(json!({ "header": header, "views": counts }))
}

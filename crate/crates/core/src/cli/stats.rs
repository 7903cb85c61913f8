use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::sample::{ledger_total, load_trees};
use crate::error::Result;
use crate::jsonl;
use crate::select::mean_std;
use crate::types::{LedgerSnapshot, SampleTree};

#[derive(Debug, Clone, Args)]
pub struct StatsArgs {
    /// Tree JSONL file or sample output directory.
    #[arg(long)]
    pub trees: PathBuf,
    /// Also write the metrics JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerStats {
    pub layer: usize,
    pub candidates: usize,
    pub mean: f64,
    pub std: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeStats {
    pub trees: usize,
    pub complete: usize,
    pub candidates: usize,
    pub ledger: LedgerSnapshot,
    pub layers: Vec<LayerStats>,
    /// Trees with at least one refinement layer.
    pub refinable: usize,
    /// Trees whose best refinement strictly beats the best initial sample.
    pub improved: usize,
    pub improvement_rate: f64,
    /// Set when no tree has a refinement layer; the rate is then 0.
    pub no_refinements: bool,
}

pub fn tree_stats(trees: &[SampleTree]) -> Result<TreeStats> {
    let depth = trees.iter().map(|t| t.layers.len()).max().unwrap_or(0);
    let mut layers = Vec::with_capacity(depth);
    for l in 0..depth {
        let rewards: Vec<f64> = trees
            .iter()
            .filter_map(|t| t.layers.get(l))
            .flat_map(|layer| &layer.candidates)
            .filter_map(|c| c.reward)
            .collect();
        if rewards.is_empty() {
            continue;
        }
        let (mean, std) = mean_std(&rewards);
        layers.push(LayerStats {
            layer: l,
            candidates: rewards.len(),
            mean,
            std,
            max: rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        });
    }
    let mut refinable = 0;
    let mut improved = 0;
    for t in trees {
        let Some(initial) = t.layers.first().and_then(|l| l.max_reward()) else {
            continue;
        };
        let refined = t.layers[1..].iter().filter_map(|l| l.max_reward()).reduce(f64::max);
        if let Some(r) = refined {
            refinable += 1;
            if r > initial {
                improved += 1;
            }
        }
    }
    Ok(TreeStats {
        trees: trees.len(),
        complete: trees.iter().filter(|t| t.is_complete()).count(),
        candidates: trees.iter().map(SampleTree::num_candidates).sum(),
        ledger: ledger_total(trees),
        layers,
        refinable,
        improved,
        improvement_rate: if refinable == 0 {
            0.0
        } else {
            improved as f64 / refinable as f64
        },
        no_refinements: refinable == 0,
    })
}

pub fn cmd_stats(args: &StatsArgs) -> Result<Value> {
    let trees = load_trees(&args.trees)?;
    let stats = tree_stats(&trees)?;
    if let Some(out) = &args.out {
        let mut text = serde_json::to_string_pretty(&stats)?;
        text.push('\n');
        jsonl::write_atomic(out, text.as_bytes())?;
    }
    Ok(serde_json::to_value(stats)?)
}

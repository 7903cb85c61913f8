//! ROUGE-1/2/L F1 against a reference text.
//!
//! Tokenization: lowercase, drop every character that is neither
//! alphanumeric nor whitespace, split on whitespace.

use std::collections::HashMap;

use serde_json::json;

use super::{RewardBackend, ScoreInputs};
use crate::error::{Error, Result};

pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect::<String>()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

/// F1 = 2PR/(P+R), written as 2·overlap/(|cand|+|ref|) so swapping the
/// arguments is bit-exact.
fn f1(overlap: usize, cand_total: usize, ref_total: usize) -> f64 {
    if cand_total == 0 || ref_total == 0 || overlap == 0 {
        return 0.0;
    }
    2.0 * overlap as f64 / (cand_total + ref_total) as f64
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// ROUGE-N F1 with clipped n-gram counts.
pub fn rouge_n_f1(candidate: &[String], reference: &[String], n: usize) -> f64 {
    let c = ngram_counts(candidate, n);
    let r = ngram_counts(reference, n);
    let overlap: usize = c
        .iter()
        .map(|(g, &k)| k.min(r.get(g).copied().unwrap_or(0)))
        .sum();
    f1(
        overlap,
        candidate.len().saturating_sub(n - 1),
        reference.len().saturating_sub(n - 1),
    )
}

pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l_f1(candidate: &[String], reference: &[String]) -> f64 {
    f1(lcs_len(candidate, reference), candidate.len(), reference.len())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RougeScores {
    pub rouge1: f64,
    pub rouge2: f64,
    pub rouge_l: f64,
}

impl RougeScores {
    pub fn mean(&self) -> f64 {
        (self.rouge1 + self.rouge2 + self.rouge_l) / 3.0
    }
}

pub fn rouge_scores(candidate: &str, reference: &str) -> RougeScores {
    let c = tokenize(candidate);
    let r = tokenize(reference);
    RougeScores {
        rouge1: rouge_n_f1(&c, &r, 1),
        rouge2: rouge_n_f1(&c, &r, 2),
        rouge_l: rouge_l_f1(&c, &r),
    }
}

/// Mean of ROUGE-1, ROUGE-2 and ROUGE-L F1. Empty inputs score 0.
pub fn rouge_reward(candidate: &str, reference: &str) -> f64 {
    rouge_scores(candidate, reference).mean()
}

/// Reward backend that scores responses against `PromptRecord::reference`.
#[derive(Debug, Clone, Copy, Default)]
pub struct RougeReward;

impl RewardBackend for RougeReward {
    fn score(&self, inputs: &ScoreInputs) -> Result<f64> {
        let reference = inputs
            .reference
            .as_deref()
            .ok_or_else(|| Error::Data("rouge reward needs a reference text".into()))?;
        Ok(rouge_reward(&inputs.response, reference))
    }

    fn identity(&self) -> serde_json::Value {
        json!({"kind": "rouge", "variant": "mean_f1_r1_r2_rl"})
    }
}

//! Domain types shared by the samplers, backends and dataset builder.
//!
//! Everything here is plain data with serde derives; the JSONL schemas on
//! disk are exactly these structs with `snake_case` field names.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One task instance: an instruction, an optional preference statement and
/// an optional reference text used by reference-based rewards.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub id: String,
    pub instruction: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preference: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, String>,
}

impl PromptRecord {
    pub fn new(id: impl Into<String>, instruction: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            instruction: instruction.into(),
            preference: None,
            reference: None,
            meta: BTreeMap::new(),
        }
    }

    pub fn with_preference(mut self, preference: impl Into<String>) -> Self {
        self.preference = Some(preference.into());
        self
    }

    pub fn with_reference(mut self, reference: impl Into<String>) -> Self {
        self.reference = Some(reference.into());
        self
    }

    /// The preference, if present and not blank.
    pub fn preference_text(&self) -> Option<&str> {
        self.preference.as_deref().filter(|p| !p.trim().is_empty())
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::Data("prompt id must be non-empty".into()));
        }
        if self.instruction.trim().is_empty() {
            return Err(Error::Data(format!(
                "prompt {}: instruction must be non-empty",
                self.id
            )));
        }
        Ok(())
    }
}

/// Decoding parameters passed through to the generation backend.
///
/// Samplers overwrite `seed` with a per-call value derived from the run seed,
/// so each candidate has its own reproducible random stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for DecodeParams {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            top_p: 1.0,
            max_tokens: 1024,
            seed: None,
        }
    }
}

impl DecodeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature >= 0.0) {
            return Err(Error::Config("temperature must be >= 0".into()));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(Error::Config("top_p must be in (0, 1]".into()));
        }
        if self.max_tokens == 0 {
            return Err(Error::Config("max_tokens must be positive".into()));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed: Some(seed),
            ..self.clone()
        }
    }
}

/// One sampled response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: String,
    pub prompt_id: String,
    pub layer: usize,
    /// Position within the layer.
    pub index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback_id: Option<String>,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<f64>,
    pub gen_calls_used: u32,
}

impl Candidate {
    pub fn scored_reward(&self) -> Result<f64> {
        self.reward
            .ok_or_else(|| Error::UnscoredCandidate(self.id.clone()))
    }
}

/// Model-generated critique of a candidate, used to condition one layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feedback {
    pub id: String,
    pub prompt_id: String,
    pub target_candidate_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback: Option<Feedback>,
    pub candidates: Vec<Candidate>,
}

impl Layer {
    pub fn new(index: usize) -> Self {
        Self {
            index,
            feedback: None,
            candidates: Vec::new(),
        }
    }

    pub fn max_reward(&self) -> Option<f64> {
        self.candidates
            .iter()
            .filter_map(|c| c.reward)
            .fold(None, |acc, r| Some(acc.map_or(r, |a: f64| a.max(r))))
    }
}

/// Call counters for one tree. Increments are atomic so concurrent workers
/// can share a `&BudgetLedger`.
#[derive(Debug, Default)]
pub struct BudgetLedger {
    generation_calls: AtomicU64,
    feedback_calls: AtomicU64,
    reward_calls: AtomicU64,
    prompt_tokens: AtomicU64,
    completion_tokens: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerSnapshot {
    pub generation_calls: u64,
    pub feedback_calls: u64,
    pub reward_calls: u64,
    #[serde(default)]
    pub prompt_tokens: u64,
    #[serde(default)]
    pub completion_tokens: u64,
}

impl std::ops::AddAssign for LedgerSnapshot {
    fn add_assign(&mut self, o: Self) {
        self.generation_calls += o.generation_calls;
        self.feedback_calls += o.feedback_calls;
        self.reward_calls += o.reward_calls;
        self.prompt_tokens += o.prompt_tokens;
        self.completion_tokens += o.completion_tokens;
    }
}

impl BudgetLedger {
    pub fn record_generation(&self, usage: Usage) {
        self.generation_calls.fetch_add(1, Ordering::Relaxed);
        self.record_tokens(usage);
    }

    pub fn record_feedback(&self, usage: Usage) {
        self.feedback_calls.fetch_add(1, Ordering::Relaxed);
        self.record_tokens(usage);
    }

    pub fn record_reward(&self) {
        self.reward_calls.fetch_add(1, Ordering::Relaxed);
    }

    fn record_tokens(&self, usage: Usage) {
        self.prompt_tokens
            .fetch_add(usage.prompt_tokens, Ordering::Relaxed);
        self.completion_tokens
            .fetch_add(usage.completion_tokens, Ordering::Relaxed);
    }

    pub fn generation_calls(&self) -> u64 {
        self.generation_calls.load(Ordering::Relaxed)
    }

    pub fn feedback_calls(&self) -> u64 {
        self.feedback_calls.load(Ordering::Relaxed)
    }

    pub fn reward_calls(&self) -> u64 {
        self.reward_calls.load(Ordering::Relaxed)
    }

    pub fn snapshot(&self) -> LedgerSnapshot {
        LedgerSnapshot {
            generation_calls: self.generation_calls(),
            feedback_calls: self.feedback_calls(),
            reward_calls: self.reward_calls(),
            prompt_tokens: self.prompt_tokens.load(Ordering::Relaxed),
            completion_tokens: self.completion_tokens.load(Ordering::Relaxed),
        }
    }
}

impl From<LedgerSnapshot> for BudgetLedger {
    fn from(s: LedgerSnapshot) -> Self {
        Self {
            generation_calls: AtomicU64::new(s.generation_calls),
            feedback_calls: AtomicU64::new(s.feedback_calls),
            reward_calls: AtomicU64::new(s.reward_calls),
            prompt_tokens: AtomicU64::new(s.prompt_tokens),
            completion_tokens: AtomicU64::new(s.completion_tokens),
        }
    }
}

impl Clone for BudgetLedger {
    fn clone(&self) -> Self {
        self.snapshot().into()
    }
}

impl PartialEq for BudgetLedger {
    fn eq(&self, other: &Self) -> bool {
        self.snapshot() == other.snapshot()
    }
}

impl Serialize for BudgetLedger {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.snapshot().serialize(s)
    }
}

impl<'de> Deserialize<'de> for BudgetLedger {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        LedgerSnapshot::deserialize(d).map(Into::into)
    }
}

/// Token usage reported by a backend for one call.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeStatus {
    #[default]
    Complete,
    Partial,
}

/// All layers sampled for one prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleTree {
    pub prompt: PromptRecord,
    pub layers: Vec<Layer>,
    pub ledger: BudgetLedger,
    #[serde(default)]
    pub status: TreeStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl SampleTree {
    pub fn empty(prompt: PromptRecord) -> Self {
        Self {
            prompt,
            layers: Vec::new(),
            ledger: BudgetLedger::default(),
            status: TreeStatus::Partial,
            error: None,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.status == TreeStatus::Complete
    }

    pub fn candidates(&self) -> impl Iterator<Item = &Candidate> {
        self.layers.iter().flat_map(|l| l.candidates.iter())
    }

    pub fn num_candidates(&self) -> usize {
        self.layers.iter().map(|l| l.candidates.len()).sum()
    }

    pub fn candidate(&self, id: &str) -> Option<&Candidate> {
        self.candidates().find(|c| c.id == id)
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.candidates.len()).collect()
    }

    /// Checks the structural invariants: layer indices, parent links pointing
    /// to strictly earlier layers, and feedback targets that resolve.
    pub fn check_links(&self) -> Result<()> {
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.index != i {
                return Err(Error::Data(format!("layer {i} carries index {}", layer.index)));
            }
            if i == 0 && layer.feedback.is_some() {
                return Err(Error::Data("layer 0 must not carry feedback".into()));
            }
            if let Some(f) = &layer.feedback {
                match self.candidate(&f.target_candidate_id) {
                    Some(t) if t.layer < i => {}
                    _ => {
                        return Err(Error::Data(format!(
                            "feedback {} targets unknown or later candidate",
                            f.id
                        )))
                    }
                }
            }
            for c in &layer.candidates {
                if c.layer != i {
                    return Err(Error::Data(format!("candidate {} in wrong layer", c.id)));
                }
                match (&c.parent_id, i) {
                    (None, 0) => {}
                    (Some(_), 0) => {
                        return Err(Error::Data(format!("layer-0 candidate {} has a parent", c.id)))
                    }
                    (None, _) => {
                        return Err(Error::Data(format!("candidate {} lacks a parent", c.id)))
                    }
                    (Some(p), _) => match self.candidate(p) {
                        Some(parent) if parent.layer < i => {}
                        _ => {
                            return Err(Error::Data(format!(
                                "candidate {} has unresolvable parent {p}",
                                c.id
                            )))
                        }
                    },
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rand,
    Prand,
    Greedy,
    Prs,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Rand, Method::Prand, Method::Greedy, Method::Prs];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Rand => "rand",
            Method::Prand => "prand",
            Method::Greedy => "greedy",
            Method::Prs => "prs",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rand" => Ok(Method::Rand),
            "prand" => Ok(Method::Prand),
            "greedy" => Ok(Method::Greedy),
            "prs" => Ok(Method::Prs),
            other => Err(Error::Config(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub method: Method,
    pub total_n: usize,
    pub depth: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width_schedule: Option<Vec<usize>>,
    pub use_feedback: bool,
    pub use_preference: bool,
    pub reward_sees_preference: bool,
    pub decode: DecodeParams,
    pub seed: u64,
}

impl SamplingConfig {
    pub fn new(method: Method, total_n: usize, depth: usize) -> Self {
        Self {
            method,
            total_n,
            depth,
            width_schedule: None,
            use_feedback: true,
            use_preference: true,
            reward_sees_preference: false,
            decode: DecodeParams::default(),
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_feedback(mut self, on: bool) -> Self {
        self.use_feedback = on;
        self
    }

    pub fn with_preference(mut self, on: bool) -> Self {
        self.use_preference = on;
        self
    }

    pub fn with_schedule(mut self, sizes: Vec<usize>) -> Self {
        self.depth = sizes.len();
        self.width_schedule = Some(sizes);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_n == 0 {
            return Err(Error::Config("total_n must be >= 1".into()));
        }
        if self.depth == 0 {
            return Err(Error::Config("depth must be >= 1".into()));
        }
        if let Some(s) = &self.width_schedule {
            if s.len() != self.depth {
                return Err(Error::Schedule(format!(
                    "schedule has {} layers but depth is {}",
                    s.len(),
                    self.depth
                )));
            }
            if s.iter().sum::<usize>() != self.total_n {
                return Err(Error::Schedule(format!(
                    "schedule sums to {} but total_n is {}",
                    s.iter().sum::<usize>(),
                    self.total_n
                )));
            }
        }
        self.decode.validate()
    }
}

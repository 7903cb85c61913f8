#![allow(dead_code)]

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use prs_core::backends::{
    AssembledPrompt, ContextKind, Generation, GenerationBackend, MockLandscape,
    MockLandscapeConfig, RewardBackend, ScoreInputs,
};
use prs_core::types::{DecodeParams, PromptRecord, Usage};
use prs_core::{Error, Result};
use serde_json::{json, Value};

pub fn landscape(dim: usize, seed: u64) -> MockLandscape {
    MockLandscape::new(MockLandscapeConfig {
        dim,
        seed,
        ..MockLandscapeConfig::default()
    })
    .unwrap()
}

pub fn prompt(id: &str) -> PromptRecord {
    PromptRecord::new(id, format!("instruction for {id}")).with_preference("I prefer short answers.")
}

pub fn prompts(n: usize) -> Vec<PromptRecord> {
    (0..n).map(|i| prompt(&format!("p{i}"))).collect()
}

/// Emits `s0`, `s1`, ... in call order; paired with [`ScriptedReward`].
#[derive(Default)]
pub struct Counter(AtomicUsize);

impl GenerationBackend for Counter {
    fn generate(&self, _: &AssembledPrompt, _: &DecodeParams) -> Result<Generation> {
        let k = self.0.fetch_add(1, Ordering::SeqCst);
        Ok(Generation {
            text: format!("s{k}"),
            usage: Usage::default(),
            attempts: 1,
        })
    }

    fn identity(&self) -> Value {
        json!({"kind": "counter"})
    }
}

/// Scores `sK` with `rewards[K]`.
pub struct ScriptedReward(pub Vec<f64>);

impl RewardBackend for ScriptedReward {
    fn score(&self, inputs: &ScoreInputs) -> Result<f64> {
        let k: usize = inputs.response.trim_start_matches('s').parse().unwrap();
        Ok(self.0[k])
    }

    fn identity(&self) -> Value {
        json!({"kind": "scripted"})
    }
}

/// Records every prompt it is asked to generate from.
pub struct Recording<G> {
    pub inner: G,
    pub seen: Mutex<Vec<AssembledPrompt>>,
}

impl<G> Recording<G> {
    pub fn new(inner: G) -> Self {
        Self {
            inner,
            seen: Mutex::new(Vec::new()),
        }
    }

    pub fn kinds(&self) -> Vec<ContextKind> {
        self.seen.lock().unwrap().iter().map(|p| p.context_kind).collect()
    }
}

impl<G: GenerationBackend> GenerationBackend for Recording<G> {
    fn generate(&self, prompt: &AssembledPrompt, decode: &DecodeParams) -> Result<Generation> {
        self.seen.lock().unwrap().push(prompt.clone());
        self.inner.generate(prompt, decode)
    }

    fn identity(&self) -> Value {
        self.inner.identity()
    }
}

/// Succeeds for the first `budget` calls, then fails every call.
pub struct FailAfter<T> {
    pub inner: T,
    pub budget: usize,
    calls: AtomicUsize,
}

impl<T> FailAfter<T> {
    pub fn new(inner: T, budget: usize) -> Self {
        Self {
            inner,
            budget,
            calls: AtomicUsize::new(0),
        }
    }

    fn spend(&self) -> Result<()> {
        if self.calls.fetch_add(1, Ordering::SeqCst) >= self.budget {
            return Err(Error::Backend("injected failure".into()));
        }
        Ok(())
    }
}

impl<G: GenerationBackend> GenerationBackend for FailAfter<G> {
    fn generate(&self, prompt: &AssembledPrompt, decode: &DecodeParams) -> Result<Generation> {
        self.spend()?;
        self.inner.generate(prompt, decode)
    }

    fn identity(&self) -> Value {
        self.inner.identity()
    }
}

impl<R: RewardBackend> RewardBackend for FailAfter<R> {
    fn score(&self, inputs: &ScoreInputs) -> Result<f64> {
        self.spend()?;
        self.inner.score(inputs)
    }

    fn identity(&self) -> Value {
        self.inner.identity()
    }
}

pub fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).unwrap()
}

//! Generation and reward backends.
//!
//! Samplers only see the two traits below. Three families implement them:
//! an HTTP chat-completion client ([`http`]), a synthetic vector landscape
//! with a known optimum ([`mock`]), and the local ROUGE scorer ([`rouge`]).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::types::{DecodeParams, Usage};

pub mod http;
pub mod mock;
pub mod rouge;

pub use http::{HttpConfig, HttpGenerator, HttpReward, RetryPolicy};
pub use mock::{MockLandscape, MockLandscapeConfig};
pub use rouge::RougeReward;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextKind {
    Initial,
    Feedback,
    RefineWithFeedback,
    RefineWithoutFeedback,
    AnnotatePreference,
    /// Second pass that generalizes an annotated preference. Experimental.
    RevisePreference,
}

impl ContextKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ContextKind::Initial => "initial",
            ContextKind::Feedback => "feedback",
            ContextKind::RefineWithFeedback => "refine_with_feedback",
            ContextKind::RefineWithoutFeedback => "refine_without_feedback",
            ContextKind::AnnotatePreference => "annotate_preference",
            ContextKind::RevisePreference => "revise_preference",
        }
    }
}

impl fmt::Display for ContextKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A fully rendered prompt ready to send to a generation backend.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssembledPrompt {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<String>,
    pub user: String,
    pub context_kind: ContextKind,
}

impl AssembledPrompt {
    /// Canonical byte encoding used for hashing.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.user.len() + 64);
        out.extend_from_slice(self.context_kind.as_str().as_bytes());
        out.push(0);
        if let Some(s) = &self.system {
            out.extend_from_slice(s.as_bytes());
        }
        out.push(0);
        out.extend_from_slice(self.user.as_bytes());
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Generation {
    pub text: String,
    pub usage: Usage,
    /// HTTP attempts spent, including retries. Always 1 for local backends.
    pub attempts: u32,
}

/// A policy model seen as an opaque sampler.
pub trait GenerationBackend: Send + Sync {
    fn generate(&self, prompt: &AssembledPrompt, decode: &DecodeParams) -> Result<Generation>;

    /// Short description recorded in run manifests.
    fn identity(&self) -> serde_json::Value;
}

/// The inputs a reward backend scores.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreInputs {
    pub instruction: String,
    pub preference: Option<String>,
    pub response: String,
    pub reference: Option<String>,
}

/// A pure scorer: identical inputs must give bit-identical rewards.
pub trait RewardBackend: Send + Sync {
    fn score(&self, inputs: &ScoreInputs) -> Result<f64>;

    fn identity(&self) -> serde_json::Value;
}

/// Builds the reward inputs for one response.
///
/// With `reward_sees_preference` set, the preference is appended to the
/// instruction after a blank line and also passed alongside, so the reward
/// sees the preference either way it reads its inputs. Unset, the preference
/// is dropped entirely.
pub fn reward_context(
    instruction: &str,
    preference: Option<&str>,
    response: &str,
    reference: Option<&str>,
    reward_sees_preference: bool,
) -> ScoreInputs {
    let preference = preference.filter(|p| !p.trim().is_empty());
    match (reward_sees_preference, preference) {
        (true, Some(p)) => ScoreInputs {
            instruction: format!("{instruction}\n\n{p}"),
            preference: Some(p.to_string()),
            response: response.to_string(),
            reference: reference.map(str::to_string),
        },
        _ => ScoreInputs {
            instruction: instruction.to_string(),
            preference: None,
            response: response.to_string(),
            reference: reference.map(str::to_string),
        },
    }
}

impl<T: GenerationBackend + ?Sized> GenerationBackend for &T {
    fn generate(&self, prompt: &AssembledPrompt, decode: &DecodeParams) -> Result<Generation> {
        (**self).generate(prompt, decode)
    }
    fn identity(&self) -> serde_json::Value {
        (**self).identity()
    }
}

impl<T: RewardBackend + ?Sized> RewardBackend for &T {
    fn score(&self, inputs: &ScoreInputs) -> Result<f64> {
        (**self).score(inputs)
    }
    fn identity(&self) -> serde_json::Value {
        (**self).identity()
    }
}

impl<T: GenerationBackend + ?Sized> GenerationBackend for Box<T> {
    fn generate(&self, prompt: &AssembledPrompt, decode: &DecodeParams) -> Result<Generation> {
        (**self).generate(prompt, decode)
    }
    fn identity(&self) -> serde_json::Value {
        (**self).identity()
    }
}

impl<T: RewardBackend + ?Sized> RewardBackend for Box<T> {
    fn score(&self, inputs: &ScoreInputs) -> Result<f64> {
        (**self).score(inputs)
    }
    fn identity(&self) -> serde_json::Value {
        (**self).identity()
    }
}

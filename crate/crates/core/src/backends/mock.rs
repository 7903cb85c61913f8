//! A synthetic generation/reward pair over numeric vectors.
//!
//! Responses are vectors serialized as `v:[a1,...,ak]`. Initial samples are
//! drawn around the origin, refinements around their parent, and the reward
//! is the negative squared distance to a hidden target. Feedback is a hint
//! vector `h:[...]` pointing from the parent toward the target, scaled by
//! `feedback_gain` when a refinement consumes it.
//!
//! Every call draws from a ChaCha stream keyed by the landscape seed, the
//! decode seed, and the prompt bytes, so results do not depend on call order
//! or concurrency.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{
    AssembledPrompt, ContextKind, Generation, GenerationBackend, RewardBackend, ScoreInputs,
};
use crate::error::{Error, Result};
use crate::ids::keyed_seed;
use crate::types::{DecodeParams, Usage};

pub const VECTOR_TAG: &str = "v:";
pub const HINT_TAG: &str = "h:";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockLandscapeConfig {
    pub dim: usize,
    pub sigma0: f64,
    pub sigma1: f64,
    pub feedback_gain: f64,
    pub seed: u64,
}

impl Default for MockLandscapeConfig {
    fn default() -> Self {
        Self {
            dim: 8,
            sigma0: 1.0,
            sigma1: 0.25,
            feedback_gain: 0.0,
            seed: 0,
        }
    }
}

impl MockLandscapeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("mock dim must be >= 1".into()));
        }
        if !(self.sigma0 > 0.0 && self.sigma1 > 0.0) {
            return Err(Error::Config("mock sigma0 and sigma1 must be > 0".into()));
        }
        if !(self.feedback_gain >= 0.0) {
            return Err(Error::Config("mock feedback_gain must be >= 0".into()));
        }
        Ok(())
    }
}

/// Serializes a vector with 9 decimal digits per coordinate.
pub fn format_vector(tag: &str, v: &[f64]) -> String {
    let body = v
        .iter()
        .map(|x| format!("{x:.9}"))
        .collect::<Vec<_>>()
        .join(",");
    format!("{tag}[{body}]")
}

/// Finds the first `tag[...]` in `text` and parses it.
pub fn parse_vector(tag: &str, text: &str) -> Option<Vec<f64>> {
    let open = format!("{tag}[");
    let start = text.find(&open)? + open.len();
    let end = start + text[start..].find(']')?;
    let body = &text[start..end];
    if body.trim().is_empty() {
        return Some(Vec::new());
    }
    body.split(',')
        .map(|s| s.trim().parse::<f64>().ok())
        .collect()
}

#[derive(Debug, Clone)]
pub struct MockLandscape {
    cfg: MockLandscapeConfig,
    target: Vec<f64>,
}

impl MockLandscape {
    /// Draws the hidden target from `N(0, sigma0^2 I)` using `cfg.seed`.
    pub fn new(cfg: MockLandscapeConfig) -> Result<Self> {
        cfg.validate()?;
        if cfg.sigma1 >= cfg.sigma0 {
            log::warn!(
                "mock landscape: sigma1 ({}) >= sigma0 ({}); refinements will explore more than initial samples",
                cfg.sigma1,
                cfg.sigma0
            );
        }
        let mut rng = ChaCha8Rng::seed_from_u64(keyed_seed("mock-target", &[&cfg.seed.to_le_bytes()]));
        let target = (0..cfg.dim)
            .map(|_| cfg.sigma0 * Distribution::<f64>::sample(&StandardNormal, &mut rng))
            .collect();
        Ok(Self { cfg, target })
    }

    /// Test hook: fixes the hidden target explicitly.
    pub fn with_target(cfg: MockLandscapeConfig, target: Vec<f64>) -> Result<Self> {
        cfg.validate()?;
        if target.len() != cfg.dim {
            return Err(Error::Config(format!(
                "target has {} coordinates, dim is {}",
                target.len(),
                cfg.dim
            )));
        }
        Ok(Self { cfg, target })
    }

    pub fn config(&self) -> &MockLandscapeConfig {
        &self.cfg
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    fn rng_for(&self, prompt: &AssembledPrompt, decode: &DecodeParams) -> ChaCha8Rng {
        let decode_seed = match decode.seed {
            Some(s) => [&[1u8][..], &s.to_le_bytes()].concat(),
            None => vec![0u8],
        };
        let seed = keyed_seed(
            "mock-generate",
            &[
                &self.cfg.seed.to_le_bytes(),
                &decode_seed,
                &prompt.canonical_bytes(),
            ],
        );
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn parse_dim(&self, tag: &str, text: &str) -> Option<Vec<f64>> {
        parse_vector(tag, text).filter(|v| v.len() == self.cfg.dim)
    }

    fn parent(&self, prompt: &AssembledPrompt) -> Result<Vec<f64>> {
        self.parse_dim(VECTOR_TAG, &prompt.user).ok_or_else(|| {
            Error::MalformedParent(format!(
                "no {}-dimensional {VECTOR_TAG}[...] vector in {} prompt",
                self.cfg.dim, prompt.context_kind
            ))
        })
    }

    fn draw_around(&self, center: &[f64], sigma: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
        center
            .iter()
            .map(|c| c + sigma * Distribution::<f64>::sample(&StandardNormal, rng))
            .collect()
    }

    /// Unit direction from `from` toward the target; zero when feedback is
    /// disabled or `from` already sits on the target.
    pub fn hint(&self, from: &[f64]) -> Vec<f64> {
        let diff: Vec<f64> = self.target.iter().zip(from).map(|(t, f)| t - f).collect();
        let norm = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
        if self.cfg.feedback_gain == 0.0 || norm == 0.0 {
            return vec![0.0; self.cfg.dim];
        }
        diff.into_iter().map(|d| d / norm).collect()
    }

    pub fn reward_of(&self, v: &[f64]) -> f64 {
        -v.iter()
            .zip(&self.target)
            .map(|(a, t)| (a - t) * (a - t))
            .sum::<f64>()
    }

    pub fn score_text(&self, response: &str) -> Result<f64> {
        let v = self.parse_dim(VECTOR_TAG, response).ok_or_else(|| {
            Error::MalformedResponse(format!(
                "expected a {}-dimensional {VECTOR_TAG}[...] vector",
                self.cfg.dim
            ))
        })?;
        Ok(self.reward_of(&v))
    }

    fn text_for(&self, prompt: &AssembledPrompt, decode: &DecodeParams) -> Result<String> {
        let mut rng = self.rng_for(prompt, decode);
        let zero = vec![0.0; self.cfg.dim];
        match prompt.context_kind {
            ContextKind::Initial => Ok(format_vector(
                VECTOR_TAG,
                &self.draw_around(&zero, self.cfg.sigma0, &mut rng),
            )),
            ContextKind::RefineWithoutFeedback => {
                let parent = self.parent(prompt)?;
                Ok(format_vector(
                    VECTOR_TAG,
                    &self.draw_around(&parent, self.cfg.sigma1, &mut rng),
                ))
            }
            ContextKind::RefineWithFeedback => {
                let parent = self.parent(prompt)?;
                let hint = self.parse_dim(HINT_TAG, &prompt.user).ok_or_else(|| {
                    Error::MalformedParent(format!("no {HINT_TAG}[...] hint in refinement prompt"))
                })?;
                let center: Vec<f64> = parent
                    .iter()
                    .zip(&hint)
                    .map(|(p, h)| p + self.cfg.feedback_gain * h)
                    .collect();
                Ok(format_vector(
                    VECTOR_TAG,
                    &self.draw_around(&center, self.cfg.sigma1, &mut rng),
                ))
            }
            ContextKind::Feedback => {
                let parent = self.parent(prompt)?;
                Ok(format_vector(HINT_TAG, &self.hint(&parent)))
            }
            ContextKind::AnnotatePreference | ContextKind::RevisePreference => {
                const TRAITS: [&str; 6] = [
                    "concise",
                    "detailed",
                    "step-by-step",
                    "example-driven",
                    "formal",
                    "friendly",
                ];
                let pick = |r: &mut ChaCha8Rng| {
                    use rand::Rng;
                    TRAITS[r.random_range(0..TRAITS.len())]
                };
                let (a, b) = (pick(&mut rng), pick(&mut rng));
                Ok(format!("I prefer responses that are {a} and {b}."))
            }
        }
    }
}

fn word_count(s: &str) -> u64 {
    s.split_whitespace().count() as u64
}

impl GenerationBackend for MockLandscape {
    fn generate(&self, prompt: &AssembledPrompt, decode: &DecodeParams) -> Result<Generation> {
        let text = self.text_for(prompt, decode)?;
        let usage = Usage {
            prompt_tokens: word_count(&prompt.user)
                + prompt.system.as_deref().map_or(0, word_count),
            completion_tokens: word_count(&text),
        };
        Ok(Generation {
            text,
            usage,
            attempts: 1,
        })
    }

    fn identity(&self) -> serde_json::Value {
        json!({"kind": "mock", "params": self.cfg})
    }
}

impl RewardBackend for MockLandscape {
    fn score(&self, inputs: &ScoreInputs) -> Result<f64> {
        self.score_text(&inputs.response)
    }

    fn identity(&self) -> serde_json::Value {
        json!({"kind": "mock", "params": self.cfg})
    }
}

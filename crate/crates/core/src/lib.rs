//! Preference-guided reflective sampling for language models.
//!
//! A [`samplers::Sampler`] grows a tree of candidate responses per prompt:
//! an initial layer of samples, then layers of refinements of the best
//! candidate so far, optionally guided by self-generated feedback. The same
//! engine runs the random, preference-conditioned and greedy baselines under
//! an identical budget, and [`dataset`] turns scored trees into offline-RL
//! training records.

pub mod backends;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod ids;
pub mod jsonl;
pub mod samplers;
pub mod select;
pub mod templates;
pub mod types;

pub use error::{Error, Result};
pub use samplers::{Sampler, WidthSchedule};
pub use templates::TemplateSet;
pub use types::{
    BudgetLedger, Candidate, DecodeParams, Feedback, Layer, Method, PromptRecord, SampleTree,
    SamplingConfig,
};

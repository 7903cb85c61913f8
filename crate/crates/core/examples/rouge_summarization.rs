//! Plug a custom generator into the samplers and score summaries with the
//! ROUGE reward against a reference.
//!
//! The generator here is a toy extractive summarizer: it picks a seeded
//! subset of the article's sentences and refines by swapping one sentence of
//! the previous summary for another.
//!
//! ```bash
//! cargo run -p prs-core --example rouge_summarization
//! ```

use prs_core::backends::{AssembledPrompt, ContextKind, Generation, GenerationBackend, RougeReward};
use prs_core::samplers::bon_select;
use prs_core::types::Usage;
use prs_core::{DecodeParams, Method, PromptRecord, Sampler, SamplingConfig, TemplateSet};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ARTICLE: &str = "The city council met on Tuesday. It approved a new budget for parks. \
    Residents had asked for more playgrounds. The mayor praised the decision. \
    Construction starts next spring. Critics worry about rising costs.";

struct Extractive {
    sentences: Vec<&'static str>,
}

impl Extractive {
    fn pick_from(&self, rng: &mut ChaCha8Rng, exclude: &[&str], k: usize) -> Vec<&'static str> {
        let pool: Vec<_> = self.sentences.iter().copied().filter(|s| !exclude.contains(s)).collect();
        pool.choose_multiple(rng, k).copied().collect()
    }

    fn pick(&self, rng: &mut ChaCha8Rng, exclude: &[&str], k: usize) -> String {
        self.pick_from(rng, exclude, k).join(". ") + "."
    }
}

impl GenerationBackend for Extractive {
    fn generate(&self, prompt: &AssembledPrompt, decode: &DecodeParams) -> prs_core::Result<Generation> {
        let mut rng = ChaCha8Rng::seed_from_u64(decode.seed.unwrap_or(0));
        let text = match prompt.context_kind {
            ContextKind::Feedback => "Cover the budget decision and when work begins.".to_string(),
            ContextKind::Initial => self.pick(&mut rng, &[], 3),
            // sentences quoted twice are the article and the previous summary
            _ => {
                let parent: Vec<_> = self
                    .sentences
                    .iter()
                    .copied()
                    .filter(|s| prompt.user.matches(s).count() > 1)
                    .collect();
                let drop = rng.random_range(0..parent.len().max(1));
                let keep: Vec<_> = parent.iter().enumerate().filter(|(i, _)| *i != drop).map(|(_, s)| *s).collect();
                let mut out = keep.clone();
                out.extend(self.pick_from(&mut rng, &parent, 1));
                out.join(". ") + "."
            }
        };
        Ok(Generation { text, usage: Usage::default(), attempts: 1 })
    }

    fn identity(&self) -> serde_json::Value {
        serde_json::json!({"kind": "extractive-demo"})
    }
}

pub fn run() -> prs_core::Result<()> {
    let generator = Extractive {
        sentences: ARTICLE.split(". ").map(|s| s.trim_end_matches('.')).collect(),
    };
    let templates = TemplateSet::summarization();
    let sampler = Sampler::new(&templates, &generator, &RougeReward);
    let prompt = PromptRecord::new("news-1", ARTICLE)
        .with_preference("I only care about what was decided and when.")
        .with_reference("The council approved a parks budget. Construction starts next spring.");

    for method in [Method::Rand, Method::Prs] {
        let depth = if method == Method::Prs { 2 } else { 1 };
        let cfg = SamplingConfig::new(method, 8, depth).with_seed(1);
        let tree = sampler.run(&prompt, &cfg).map_err(|i| i.error)?;
        let best = bon_select(&tree)?;
        println!("{:<5} rouge {:.4}: {}", method.as_str(), best.reward.unwrap_or(0.0), best.text);
    }
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

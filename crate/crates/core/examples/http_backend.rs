//! Sample against an OpenAI-compatible chat endpoint.
//!
//! ```bash
//! PRS_ENDPOINT=http://localhost:8000/v1/chat/completions PRS_MODEL=my-model \
//!     PRS_API_TOKEN=... cargo run -p prs-core --example http_backend
//! ```
//!
//! Responses are scored with ROUGE against a reference so no reward server
//! is needed. Without `PRS_ENDPOINT` the example only prints this usage.

use prs_core::backends::{HttpConfig, HttpGenerator, RougeReward};
use prs_core::samplers::bon_select;
use prs_core::{Method, PromptRecord, Sampler, SamplingConfig, TemplateSet};

pub fn run() -> prs_core::Result<()> {
    let Ok(endpoint) = std::env::var("PRS_ENDPOINT") else {
        println!("set PRS_ENDPOINT (and PRS_MODEL, PRS_API_TOKEN) to run against a server");
        return Ok(());
    };
    let model = std::env::var("PRS_MODEL").unwrap_or_else(|_| "default".into());
    let mut http = HttpConfig::new(endpoint, model).with_env_token();
    http.max_concurrency = 4;
    let generator = HttpGenerator::new(http)?;

    let templates = TemplateSet::summarization();
    let sampler = Sampler::new(&templates, &generator, &RougeReward);
    let prompt = PromptRecord::new(
        "doc",
        "Rust 1.0 was released in May 2015. It promised stability without stagnation.",
    )
    .with_preference("One sentence.")
    .with_reference("Rust 1.0 shipped in May 2015 promising stability.");
    let cfg = SamplingConfig::new(Method::Prs, 8, 2).with_seed(1);
    let tree = sampler.run(&prompt, &cfg).map_err(|i| i.error)?;
    let best = bon_select(&tree)?;
    println!("best ({:.3}): {}", best.reward.unwrap_or(0.0), best.text);
    println!("{:?}", tree.ledger.snapshot());
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

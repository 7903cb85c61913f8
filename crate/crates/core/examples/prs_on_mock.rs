//! Grow one PRS tree on the synthetic landscape and print it layer by layer.
//!
//! ```bash
//! cargo run -p prs-core --example prs_on_mock
//! ```

use prs_core::backends::{MockLandscape, MockLandscapeConfig};
use prs_core::samplers::{bon_select, Sampler};
use prs_core::{Method, PromptRecord, SamplingConfig, TemplateSet};

pub fn run() -> prs_core::Result<()> {
    let landscape = MockLandscape::new(MockLandscapeConfig {
        dim: 4,
        feedback_gain: 0.5,
        ..MockLandscapeConfig::default()
    })?;
    let templates = TemplateSet::instruction_following();
    let sampler = Sampler::new(&templates, &landscape, &landscape);

    let prompt = PromptRecord::new("demo", "Explain why the sky is blue.")
        .with_preference("I like answers that start from first principles.");
    let cfg = SamplingConfig::new(Method::Prs, 12, 3).with_seed(7);
    let tree = sampler.run(&prompt, &cfg).map_err(|i| i.error)?;

    for layer in &tree.layers {
        println!("layer {} ({} candidates)", layer.index, layer.candidates.len());
        if let Some(f) = &layer.feedback {
            println!("  feedback on {}: {}", f.target_candidate_id, f.text);
        }
        for c in &layer.candidates {
            println!("  {} reward {:.4}", &c.id[..12], c.reward.unwrap_or(f64::NAN));
        }
    }
    let best = bon_select(&tree)?;
    println!("best: layer {} reward {:.4}", best.layer, best.reward.unwrap_or(f64::NAN));
    println!("ledger: {:?}", tree.ledger.snapshot());
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

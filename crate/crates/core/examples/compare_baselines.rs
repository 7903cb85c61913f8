//! Rand, PRand, greedy refinement and PRS under the same budget, averaged
//! over independent landscapes.
//!
//! ```bash
//! cargo run -p prs-core --example compare_baselines --release
//! ```

use prs_core::backends::{MockLandscape, MockLandscapeConfig};
use prs_core::samplers::{tree_summary, Sampler};
use prs_core::select::mean_std;
use prs_core::{Method, PromptRecord, SamplingConfig, TemplateSet};

const LANDSCAPES: u64 = 100;
const N: usize = 32;

pub fn run() -> prs_core::Result<()> {
    let templates = TemplateSet::instruction_following();
    println!("{:<8} {:>10} {:>8}", "method", "mean best", "std");
    for method in Method::ALL {
        let mut best = Vec::new();
        for seed in 0..LANDSCAPES {
            let m = MockLandscape::new(MockLandscapeConfig {
                dim: 8,
                sigma1: 0.25,
                seed,
                ..MockLandscapeConfig::default()
            })?;
            let prompt = PromptRecord::new(format!("p{seed}"), "Write a haiku about rain.")
                .with_preference("Keep it playful.");
            // greedy refinement uses N layers of width 1
            let depth = if method == Method::Prs { 2 } else { 1 };
            let cfg = SamplingConfig::new(method, N, depth)
                .with_seed(seed)
                .with_feedback(false);
            let tree = Sampler::new(&templates, &m, &m).run(&prompt, &cfg).map_err(|i| i.error)?;
            best.push(tree_summary(&tree)?.0);
        }
        let (mean, std) = mean_std(&best);
        println!("{:<8} {:>10.4} {:>8.4}", method.as_str(), mean, std);
    }
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

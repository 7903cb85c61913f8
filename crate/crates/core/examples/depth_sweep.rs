//! Trade width for depth at a fixed budget and print the sweep as CSV.
//!
//! ```bash
//! cargo run -p prs-core --example depth_sweep
//! ```

use prs_core::backends::{MockLandscape, MockLandscapeConfig};
use prs_core::samplers::{sweep_depth, write_sweep_csv, Sampler};
use prs_core::{Method, PromptRecord, SamplingConfig, TemplateSet};

pub fn run() -> prs_core::Result<()> {
    let m = MockLandscape::new(MockLandscapeConfig {
        dim: 8,
        sigma1: 0.25,
        feedback_gain: 0.3,
        ..MockLandscapeConfig::default()
    })?;
    let templates = TemplateSet::instruction_following();
    let sampler = Sampler::new(&templates, &m, &m);
    let prompts: Vec<_> = (0..20)
        .map(|i| PromptRecord::new(format!("p{i}"), format!("Question {i}")).with_preference("Be brief."))
        .collect();
    let base = SamplingConfig::new(Method::Prs, 16, 1).with_seed(3);
    let rows = sweep_depth(&sampler, &prompts, 16, &[1, 2, 4, 8, 16], &base)?;
    write_sweep_csv(&rows, std::io::stdout().lock()).map_err(|e| prs_core::Error::io("<stdout>", e))?;
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

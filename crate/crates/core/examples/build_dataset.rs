//! Turn sampled trees into improving pairs and training triples, merge them
//! with seed SFT data, and write the trainer views.
//!
//! ```bash
//! cargo run -p prs-core --example build_dataset
//! ```

use prs_core::backends::{MockLandscape, MockLandscapeConfig};
use prs_core::dataset::{
    build_iteration_dataset, emit_trainer_views, merge_iterations, IterationDataset, RecordKind,
    SftExample,
};
use prs_core::{Method, PromptRecord, Sampler, SamplingConfig, TemplateSet};

pub fn run() -> prs_core::Result<()> {
    let m = MockLandscape::new(MockLandscapeConfig {
        feedback_gain: 0.5,
        ..MockLandscapeConfig::default()
    })?;
    let templates = TemplateSet::instruction_following();
    let sampler = Sampler::new(&templates, &m, &m);
    let prompts: Vec<_> = (0..50)
        .map(|i| PromptRecord::new(format!("p{i}"), format!("Task {i}")).with_preference("Use bullet points."))
        .collect();

    let mut iterations = Vec::new();
    for iteration in 1..=2u32 {
        let cfg = SamplingConfig::new(Method::Prs, 8, 2).with_seed(iteration as u64);
        let trees: Vec<_> = sampler
            .run_all(&prompts, &cfg)
            .into_iter()
            .collect::<Result<_, _>>()
            .map_err(|i| i.error)?;
        let records = build_iteration_dataset(&trees, iteration)?;
        let pairs = records.iter().filter(|r| r.kind == RecordKind::ImprovingPair).count();
        println!("iteration {iteration}: {} records, {pairs} improving pairs", records.len());
        iterations.push(IterationDataset { iteration, records });
    }

    let sft = vec![SftExample {
        id: Some("seed-0".into()),
        instruction: "Say hello.".into(),
        response: "Hello!".into(),
    }];
    let merged = merge_iterations(iterations, Some(sft))?;
    let out = tempfile::tempdir().map_err(|e| prs_core::Error::io(std::env::temp_dir(), e))?;
    let counts = emit_trainer_views(&merged, out.path())?;
    println!(
        "views: sft {} preference {} refinement {} (total {})",
        counts.sft,
        counts.preference,
        counts.refinement,
        counts.total()
    );
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

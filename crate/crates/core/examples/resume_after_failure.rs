//! A backend that dies mid-tree leaves a partial tree behind. Persist it,
//! resume with a healthy backend, and get the same tree and budget as an
//! uninterrupted run.
//!
//! ```bash
//! cargo run -p prs-core --example resume_after_failure
//! ```

use std::sync::atomic::{AtomicUsize, Ordering};

use prs_core::backends::{AssembledPrompt, Generation, GenerationBackend, MockLandscape, MockLandscapeConfig};
use prs_core::{DecodeParams, Error, Method, PromptRecord, SampleTree, Sampler, SamplingConfig, TemplateSet};

struct Flaky<'a> {
    inner: &'a MockLandscape,
    left: AtomicUsize,
}

impl GenerationBackend for Flaky<'_> {
    fn generate(&self, prompt: &AssembledPrompt, decode: &DecodeParams) -> prs_core::Result<Generation> {
        if self.left.fetch_sub(1, Ordering::SeqCst) == 0 {
            return Err(Error::Backend("connection reset".into()));
        }
        self.inner.generate(prompt, decode)
    }

    fn identity(&self) -> serde_json::Value {
        self.inner.identity()
    }
}

pub fn run() -> prs_core::Result<()> {
    let m = MockLandscape::new(MockLandscapeConfig::default())?;
    let templates = TemplateSet::instruction_following();
    let prompt = PromptRecord::new("r1", "Summarize the plot of Hamlet.").with_preference("No spoilers.");
    let cfg = SamplingConfig::new(Method::Prs, 16, 4).with_seed(5);

    let flaky = Flaky { inner: &m, left: AtomicUsize::new(9) };
    let cut = Sampler::new(&templates, &flaky, &m)
        .run(&prompt, &cfg)
        .expect_err("the flaky backend gives out");
    println!("interrupted: {} ({} candidates kept)", cut.error, cut.tree.num_candidates());

    // what would be on disk
    let saved = serde_json::to_string(&cut.tree)?;
    let reloaded: SampleTree = serde_json::from_str(&saved)?;

    let healthy = Sampler::new(&templates, &m, &m);
    let resumed = healthy.resume(reloaded, &cfg).map_err(|i| i.error)?;
    let fresh = healthy.run(&prompt, &cfg).map_err(|i| i.error)?;
    println!("resumed ledger: {:?}", resumed.ledger.snapshot());
    println!(
        "identical to an uninterrupted run: {}",
        serde_json::to_string(&resumed)? == serde_json::to_string(&fresh)?
    );
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

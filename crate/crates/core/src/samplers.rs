//! Search strategies over a generation backend.
//!
//! All four methods share one layer-expansion loop. A method only decides
//! the width schedule, whether feedback is generated and whether the
//! preference is shown to the policy:
//!
//! | method | schedule             | feedback   | preference     |
//! |--------|----------------------|------------|----------------|
//! | rand   | `[N]`                | no         | never          |
//! | prand  | `[N]`                | no         | always         |
//! | greedy | `[1; N]`             | no         | config         |
//! | prs    | config or `⌊N/d⌋`    | config     | config         |
//!
//! Layer `l ≥ 1` refines the best candidate over layers `0..l`. Candidates
//! are scored as soon as they are generated and the tree is updated in
//! place, so a failed run leaves a partial tree that [`Sampler::resume`]
//! completes without repeating finished calls.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backends::{reward_context, ContextKind, GenerationBackend, RewardBackend};
use crate::error::{Error, Result};
use crate::ids;
use crate::select::{select_best, top_k_mean};
use crate::templates::TemplateSet;
use crate::types::{
    BudgetLedger, Candidate, Feedback, Layer, Method, PromptRecord, SampleTree, SamplingConfig,
    TreeStatus,
};

/// Number of candidates per layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WidthSchedule {
    sizes: Vec<usize>,
}

impl WidthSchedule {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::Schedule("schedule needs at least one layer".into()));
        }
        if sizes.contains(&0) {
            return Err(Error::Schedule(format!("layer sizes must be positive: {sizes:?}")));
        }
        Ok(Self { sizes })
    }

    /// `(N₀, N₁)` split of a two-layer run. A zero side collapses: `(N, 0)`
    /// is the single layer `[N]`, and `(0, N)` becomes `[1, N-1]` so that one
    /// initial sample exists to refine without exceeding the budget.
    pub fn from_split(initial: usize, refinements: usize) -> Result<Self> {
        match (initial, refinements) {
            (0, 0) => Err(Error::Schedule("empty split".into())),
            (n, 0) | (0, n) if n == 1 => Self::new(vec![1]),
            (n, 0) => Self::new(vec![n]),
            (0, n) => Self::new(vec![1, n - 1]),
            (a, b) => Self::new(vec![a, b]),
        }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn depth(&self) -> usize {
        self.sizes.len()
    }

    pub fn total(&self) -> usize {
        self.sizes.iter().sum()
    }
}

/// Every layer gets `⌊N/d⌋`; the remainder goes to layer 0.
pub fn default_schedule(total_n: usize, depth: usize) -> Result<WidthSchedule> {
    if depth == 0 {
        return Err(Error::Config("depth must be >= 1".into()));
    }
    if total_n < depth {
        return Err(Error::BudgetSmallerThanDepth { total_n, depth });
    }
    let w = total_n / depth;
    let mut sizes = vec![w; depth];
    sizes[0] += total_n - w * depth;
    WidthSchedule::new(sizes)
}

/// How a method expands a tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plan {
    pub schedule: WidthSchedule,
    pub use_feedback: bool,
    pub use_preference: bool,
}

impl Plan {
    pub fn for_config(cfg: &SamplingConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.total_n;
        Ok(match cfg.method {
            Method::Rand => Plan {
                schedule: WidthSchedule::new(vec![n])?,
                use_feedback: false,
                use_preference: false,
            },
            Method::Prand => Plan {
                schedule: WidthSchedule::new(vec![n])?,
                use_feedback: false,
                use_preference: true,
            },
            Method::Greedy => Plan {
                schedule: WidthSchedule::new(vec![1; n])?,
                use_feedback: false,
                use_preference: cfg.use_preference,
            },
            Method::Prs => Plan {
                schedule: match &cfg.width_schedule {
                    Some(s) => WidthSchedule::new(s.clone())?,
                    None => default_schedule(n, cfg.depth)?,
                },
                use_feedback: cfg.use_feedback,
                use_preference: cfg.use_preference,
            },
        })
    }

    /// Feedback calls a completed tree must show.
    pub fn expected_feedback_calls(&self) -> u64 {
        if self.use_feedback {
            self.schedule.depth() as u64 - 1
        } else {
            0
        }
    }
}

/// A run that stopped early. `tree` holds everything completed so far and
/// can be passed to [`Sampler::resume`].
#[derive(Debug)]
pub struct Interrupted {
    pub tree: SampleTree,
    pub error: Error,
}

impl fmt::Display for Interrupted {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "prompt {}: {}", self.tree.prompt.id, self.error)
    }
}

impl std::error::Error for Interrupted {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

pub type SampleResult = std::result::Result<SampleTree, Box<Interrupted>>;

enum Slot {
    Scored(Candidate),
    Unscored(Candidate, Error),
    Failed(usize, Error),
}

/// Templates plus the two backends.
#[derive(Clone, Copy)]
pub struct Sampler<'a> {
    pub templates: &'a TemplateSet,
    pub generator: &'a dyn GenerationBackend,
    pub reward: &'a dyn RewardBackend,
}

impl<'a> Sampler<'a> {
    pub fn new(
        templates: &'a TemplateSet,
        generator: &'a dyn GenerationBackend,
        reward: &'a dyn RewardBackend,
    ) -> Self {
        Self {
            templates,
            generator,
            reward,
        }
    }

    /// Runs `cfg.method` on one prompt.
    pub fn run(&self, prompt: &PromptRecord, cfg: &SamplingConfig) -> SampleResult {
        self.resume(SampleTree::empty(prompt.clone()), cfg)
    }

    pub fn run_prs(&self, prompt: &PromptRecord, cfg: &SamplingConfig) -> SampleResult {
        self.run_method(Method::Prs, prompt, cfg)
    }

    pub fn run_rand(&self, prompt: &PromptRecord, cfg: &SamplingConfig) -> SampleResult {
        self.run_method(Method::Rand, prompt, cfg)
    }

    pub fn run_prand(&self, prompt: &PromptRecord, cfg: &SamplingConfig) -> SampleResult {
        self.run_method(Method::Prand, prompt, cfg)
    }

    pub fn run_greedy(&self, prompt: &PromptRecord, cfg: &SamplingConfig) -> SampleResult {
        self.run_method(Method::Greedy, prompt, cfg)
    }

    fn run_method(&self, m: Method, prompt: &PromptRecord, cfg: &SamplingConfig) -> SampleResult {
        if cfg.method != m {
            return Err(Box::new(Interrupted {
                tree: SampleTree::empty(prompt.clone()),
                error: Error::Config(format!("run_{m} called with method {}", cfg.method)),
            }));
        }
        self.run(prompt, cfg)
    }

    /// Continues a partial tree; complete trees are returned unchanged.
    pub fn resume(&self, mut tree: SampleTree, cfg: &SamplingConfig) -> SampleResult {
        if tree.is_complete() {
            return Ok(tree);
        }
        match self.advance(&mut tree, cfg) {
            Ok(()) => {
                tree.status = TreeStatus::Complete;
                tree.error = None;
                Ok(tree)
            }
            Err(error) => {
                tree.status = TreeStatus::Partial;
                tree.error = Some(error.to_string());
                Err(Box::new(Interrupted { tree, error }))
            }
        }
    }

    /// Runs every prompt, in parallel across prompts; output order follows
    /// input order.
    pub fn run_all(&self, prompts: &[PromptRecord], cfg: &SamplingConfig) -> Vec<SampleResult> {
        prompts.par_iter().map(|p| self.run(p, cfg)).collect()
    }

    fn advance(&self, tree: &mut SampleTree, cfg: &SamplingConfig) -> Result<()> {
        let plan = Plan::for_config(cfg)?;
        tree.prompt.validate()?;
        if cfg.method == Method::Prand && tree.prompt.preference_text().is_none() {
            return Err(Error::PrandRequiresPreference(tree.prompt.id.clone()));
        }
        let sizes = plan.schedule.sizes();
        if tree.layers.len() > sizes.len() {
            return Err(Error::Data(format!(
                "tree has {} layers, schedule has {}",
                tree.layers.len(),
                sizes.len()
            )));
        }
        for (l, &width) in sizes.iter().enumerate() {
            if tree.layers.len() == l {
                tree.layers.push(Layer::new(l));
            }
            let (parent, feedback) = if l == 0 {
                (None, None)
            } else {
                let best = select_best(tree.layers[..l].iter().flat_map(|x| &x.candidates))?.clone();
                let feedback = if plan.use_feedback {
                    Some(self.layer_feedback(tree, l, &best, cfg, &plan)?)
                } else {
                    None
                };
                (Some(best), feedback)
            };
            self.fill_layer(tree, l, width, parent.as_ref(), feedback.as_ref(), cfg, &plan)?;
        }
        Ok(())
    }

    fn layer_feedback(
        &self,
        tree: &mut SampleTree,
        l: usize,
        best: &Candidate,
        cfg: &SamplingConfig,
        plan: &Plan,
    ) -> Result<Feedback> {
        if let Some(f) = &tree.layers[l].feedback {
            if f.target_candidate_id != best.id {
                return Err(Error::Data(format!(
                    "layer {l} feedback targets {} but the best candidate is {}",
                    f.target_candidate_id, best.id
                )));
            }
            return Ok(f.clone());
        }
        let prompt = self.templates.assemble(
            ContextKind::Feedback,
            &tree.prompt,
            Some(best),
            None,
            plan.use_preference,
        )?;
        let decode = cfg
            .decode
            .with_seed(ids::feedback_seed(cfg.seed, &tree.prompt.id, l));
        let generation = self.generator.generate(&prompt, &decode)?;
        tree.ledger.record_feedback(generation.usage);
        let feedback = Feedback {
            id: ids::feedback_id(cfg.seed, &tree.prompt.id, l),
            prompt_id: tree.prompt.id.clone(),
            target_candidate_id: best.id.clone(),
            text: generation.text,
        };
        tree.layers[l].feedback = Some(feedback.clone());
        Ok(feedback)
    }

    #[allow(clippy::too_many_arguments)]
    fn fill_layer(
        &self,
        tree: &mut SampleTree,
        l: usize,
        width: usize,
        parent: Option<&Candidate>,
        feedback: Option<&Feedback>,
        cfg: &SamplingConfig,
        plan: &Plan,
    ) -> Result<()> {
        let layer = &tree.layers[l];
        if let Some(c) = layer.candidates.iter().find(|c| c.index >= width) {
            return Err(Error::Data(format!(
                "candidate {} has index {} beyond layer width {width}",
                c.id, c.index
            )));
        }
        let present: BTreeSet<usize> = layer.candidates.iter().map(|c| c.index).collect();
        let missing: Vec<usize> = (0..width).filter(|i| !present.contains(i)).collect();
        let unscored: Vec<Candidate> = layer
            .candidates
            .iter()
            .filter(|c| c.reward.is_none())
            .cloned()
            .collect();
        if missing.is_empty() && unscored.is_empty() {
            return Ok(());
        }

        let kind = match (l, feedback) {
            (0, _) => ContextKind::Initial,
            (_, Some(_)) => ContextKind::RefineWithFeedback,
            (_, None) => ContextKind::RefineWithoutFeedback,
        };
        let prompt = self.templates.assemble(
            kind,
            &tree.prompt,
            parent,
            feedback,
            plan.use_preference,
        )?;
        let record = &tree.prompt;
        let ledger = &tree.ledger;

        let generated: Vec<Slot> = missing
            .par_iter()
            .map(|&i| {
                let decode = cfg.decode.with_seed(ids::candidate_seed(cfg.seed, &record.id, l, i));
                let generation = match self.generator.generate(&prompt, &decode) {
                    Ok(g) => g,
                    Err(e) => return Slot::Failed(i, e),
                };
                ledger.record_generation(generation.usage);
                let candidate = Candidate {
                    id: ids::candidate_id(cfg.seed, &record.id, l, i),
                    prompt_id: record.id.clone(),
                    layer: l,
                    index: i,
                    parent_id: parent.map(|p| p.id.clone()),
                    feedback_id: feedback.map(|f| f.id.clone()),
                    text: generation.text,
                    reward: None,
                    gen_calls_used: 1,
                };
                self.score(candidate, record, cfg, ledger)
            })
            .collect();
        let rescored: Vec<Slot> = unscored
            .into_par_iter()
            .map(|c| self.score(c, record, cfg, ledger))
            .collect();

        let mut first_error: Option<(usize, Error)> = None;
        let mut keep_error = |i: usize, e: Error| {
            if first_error.as_ref().is_none_or(|(j, _)| i < *j) {
                first_error = Some((i, e));
            }
        };
        let layer = &mut tree.layers[l];
        for slot in generated.into_iter().chain(rescored) {
            let c = match slot {
                Slot::Scored(c) => c,
                Slot::Unscored(c, e) => {
                    keep_error(c.index, e);
                    c
                }
                Slot::Failed(i, e) => {
                    keep_error(i, e);
                    continue;
                }
            };
            match layer.candidates.iter_mut().find(|x| x.index == c.index) {
                Some(existing) => *existing = c,
                None => layer.candidates.push(c),
            }
        }
        layer.candidates.sort_by_key(|c| c.index);
        match first_error {
            Some((_, e)) => Err(e),
            None => Ok(()),
        }
    }

    fn score(
        &self,
        mut c: Candidate,
        record: &PromptRecord,
        cfg: &SamplingConfig,
        ledger: &BudgetLedger,
    ) -> Slot {
        let inputs = reward_context(
            &record.instruction,
            record.preference_text(),
            &c.text,
            record.reference.as_deref(),
            cfg.reward_sees_preference,
        );
        match self.reward.score(&inputs) {
            Ok(r) => {
                ledger.record_reward();
                c.reward = Some(r);
                Slot::Scored(c)
            }
            Err(e) => Slot::Unscored(c, e),
        }
    }
}

/// Best-of-N: the highest-reward candidate over all layers.
pub fn bon_select(tree: &SampleTree) -> Result<&Candidate> {
    select_best(tree.candidates())
}

/// Best reward and top-3 mean of one tree (top-k shrinks for trees with
/// fewer than three candidates).
pub fn tree_summary(tree: &SampleTree) -> Result<(f64, f64)> {
    let best = bon_select(tree)?.scored_reward()?;
    let k = tree.num_candidates().min(3);
    Ok((best, top_k_mean(tree.candidates(), k)?))
}

/// Checks a completed tree against its plan: layer sizes, budget, and that
/// every refinement layer was conditioned on the argmax of the layers before
/// it.
pub fn verify_tree(tree: &SampleTree, cfg: &SamplingConfig) -> Result<()> {
    let plan = Plan::for_config(cfg)?;
    tree.check_links()?;
    if tree.layer_sizes() != plan.schedule.sizes() {
        return Err(Error::Data(format!(
            "layer sizes {:?} differ from schedule {:?}",
            tree.layer_sizes(),
            plan.schedule.sizes()
        )));
    }
    let ledger = tree.ledger.snapshot();
    if ledger.generation_calls != cfg.total_n as u64 {
        return Err(Error::Data(format!(
            "generation_calls {} != N {}",
            ledger.generation_calls, cfg.total_n
        )));
    }
    if ledger.feedback_calls != plan.expected_feedback_calls() {
        return Err(Error::Data(format!(
            "feedback_calls {} != {}",
            ledger.feedback_calls,
            plan.expected_feedback_calls()
        )));
    }
    for l in 1..tree.layers.len() {
        let best = select_best(tree.layers[..l].iter().flat_map(|x| &x.candidates))?;
        for c in &tree.layers[l].candidates {
            if c.parent_id.as_deref() != Some(best.id.as_str()) {
                return Err(Error::Data(format!(
                    "candidate {} refines {:?}, expected argmax {}",
                    c.id, c.parent_id, best.id
                )));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub depth: usize,
    pub width: usize,
    pub mean_best: Option<f64>,
    pub mean_top3: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Runs PRS with the default schedule at each depth and averages per-prompt
/// best and top-3 rewards. A depth whose runs fail yields a row marked
/// failed instead of aborting the sweep.
pub fn sweep_depth(
    sampler: &Sampler<'_>,
    prompts: &[PromptRecord],
    total_n: usize,
    depths: &[usize],
    base: &SamplingConfig,
) -> Result<Vec<SweepRow>> {
    if prompts.is_empty() {
        return Err(Error::Data("sweep needs at least one prompt".into()));
    }
    for &d in depths {
        default_schedule(total_n, d)?;
    }
    let rows = depths
        .iter()
        .map(|&depth| {
            let cfg = SamplingConfig {
                method: Method::Prs,
                total_n,
                depth,
                width_schedule: None,
                ..base.clone()
            };
            let width = total_n / depth;
            let summaries: Result<Vec<(f64, f64)>> = sampler
                .run_all(prompts, &cfg)
                .into_iter()
                .map(|r| r.map_err(|i| i.error).and_then(|t| tree_summary(&t)))
                .collect();
            match summaries {
                Ok(s) => {
                    let n = s.len() as f64;
                    SweepRow {
                        depth,
                        width,
                        mean_best: Some(s.iter().map(|x| x.0).sum::<f64>() / n),
                        mean_top3: Some(s.iter().map(|x| x.1).sum::<f64>() / n),
                        error: None,
                    }
                }
                Err(e) => SweepRow {
                    depth,
                    width,
                    mean_best: None,
                    mean_top3: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    Ok(rows)
}

pub const SWEEP_CSV_HEADER: &str = "depth,width,mean_best,mean_top3";

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{SWEEP_CSV_HEADER}")?;
    let cell = |v: Option<f64>| v.map_or_else(|| "failed".to_string(), |x| x.to_string());
    for r in rows {
        writeln!(
            out,
            "{},{},{},{}",
            r.depth,
            r.width,
            cell(r.mean_best),
            cell(r.mean_top3)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schedule_examples() {
        assert_eq!(default_schedule(32, 2).unwrap().sizes(), [16, 16]);
        assert_eq!(default_schedule(16, 3).unwrap().sizes(), [6, 5, 5]);
        assert_eq!(default_schedule(8, 1).unwrap().sizes(), [8]);
        assert!(matches!(
            default_schedule(3, 4),
            Err(Error::BudgetSmallerThanDepth { .. })
        ));
    }

    #[test]
    fn default_schedule_spends_budget() {
        for n in 1..64 {
            for d in 1..=n {
                let s = default_schedule(n, d).unwrap();
                assert_eq!(s.total(), n);
                assert_eq!(s.depth(), d);
                assert!(s.sizes()[1..].iter().all(|&w| w == n / d));
            }
        }
    }

    #[test]
    fn split_variants() {
        assert_eq!(WidthSchedule::from_split(16, 16).unwrap().sizes(), [16, 16]);
        assert_eq!(WidthSchedule::from_split(32, 0).unwrap().sizes(), [32]);
        assert_eq!(WidthSchedule::from_split(0, 32).unwrap().sizes(), [1, 31]);
        assert_eq!(WidthSchedule::from_split(0, 1).unwrap().sizes(), [1]);
        assert!(WidthSchedule::from_split(0, 0).is_err());
        assert!(WidthSchedule::new(vec![3, 0]).is_err());
    }

    #[test]
    fn plans_per_method() {
        let cfg = SamplingConfig::new(Method::Greedy, 5, 2);
        let p = Plan::for_config(&cfg).unwrap();
        assert_eq!(p.schedule.sizes(), [1, 1, 1, 1, 1]);
        assert!(!p.use_feedback);

        let cfg = SamplingConfig::new(Method::Rand, 6, 3);
        let p = Plan::for_config(&cfg).unwrap();
        assert_eq!(p.schedule.sizes(), [6]);
        assert!(!p.use_preference);

        let cfg = SamplingConfig::new(Method::Prs, 6, 3);
        assert_eq!(Plan::for_config(&cfg).unwrap().expected_feedback_calls(), 2);

        let cfg = SamplingConfig::new(Method::Prs, 6, 3).with_schedule(vec![4, 1]);
        assert!(Plan::for_config(&cfg).is_err());
    }

    #[test]
    fn csv_format() {
        let rows = vec![
            SweepRow {
                depth: 1,
                width: 4,
                mean_best: Some(-0.5),
                mean_top3: Some(-1.25),
                error: None,
            },
            SweepRow {
                depth: 2,
                width: 2,
                mean_best: None,
                mean_top3: None,
                error: Some("x".into()),
            },
        ];
        let mut buf = Vec::new();
        write_sweep_csv(&rows, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "depth,width,mean_best,mean_top3\n1,4,-0.5,-1.25\n2,2,failed,failed\n"
        );
    }
}

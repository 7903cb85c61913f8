//! Offline-RL training data from scored trees.
//!
//! Per prompt, the best refinement is compared against the candidate it
//! refined. A strict improvement yields an improving pair
//! `(x, z, y0*, f, y1*)` plus a response triple carrying the better response;
//! otherwise only a triple carrying the initial best is kept.
//!
//! Trees deeper than two layers are handled per adjacent step: each layer's
//! best refinement is compared against that layer's parent, and the triple
//! carries the global argmax. At depth 2 this is exactly the two-layer rule.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;
use crate::samplers::bon_select;
use crate::select::select_best;
use crate::types::{Candidate, SampleTree};

/// Tag written into merged-dataset headers describing how pairs were chosen.
pub const PAIR_RULE: &str = "adjacent_step";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    ResponseTriple,
    ImprovingPair,
    SftPassthrough,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub kind: RecordKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_id: Option<String>,
    pub instruction: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preference: Option<String>,
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_reward: Option<f64>,
    /// Refinement layer a pair was taken from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer: Option<usize>,
    pub iteration: u32,
}

impl TrainingRecord {
    fn triple(tree: &SampleTree, c: &Candidate, iteration: u32) -> Result<Self> {
        Ok(Self {
            kind: RecordKind::ResponseTriple,
            prompt_id: Some(tree.prompt.id.clone()),
            instruction: tree.prompt.instruction.clone(),
            preference: tree.prompt.preference_text().map(str::to_string),
            response: c.text.clone(),
            parent_response: None,
            feedback: None,
            reward: Some(c.scored_reward()?),
            parent_reward: None,
            layer: None,
            iteration,
        })
    }

    /// Checks kind-specific invariants.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Data(format!("{:?} record: {m}", self.kind)));
        match self.kind {
            RecordKind::ImprovingPair => {
                let (Some(r), Some(pr)) = (self.reward, self.parent_reward) else {
                    return bad("missing rewards");
                };
                if self.parent_response.is_none() {
                    return bad("missing parent_response");
                }
                if !(r > pr) {
                    return bad("reward does not strictly improve on parent");
                }
                if self.iteration == 0 {
                    return bad("iteration must be >= 1");
                }
            }
            RecordKind::ResponseTriple => {
                if self.parent_response.is_some() || self.feedback.is_some() {
                    return bad("triples carry no parent fields");
                }
                if self.iteration == 0 {
                    return bad("iteration must be >= 1");
                }
            }
            RecordKind::SftPassthrough => {
                if self.iteration != 0 {
                    return bad("sft records carry iteration 0");
                }
            }
        }
        Ok(())
    }
}

/// Layer-1 refinements of `y0*` that strictly beat it.
#[derive(Debug, Clone, PartialEq)]
pub struct ImprovingPairSet {
    pub parent: Candidate,
    pub parent_reward: f64,
    pub pairs: Vec<(Candidate, f64)>,
}

fn require_complete(tree: &SampleTree) -> Result<()> {
    if !tree.is_complete() {
        return Err(Error::Data(format!("tree {} is incomplete", tree.prompt.id)));
    }
    Ok(())
}

pub fn improving_pairs(tree: &SampleTree) -> Result<ImprovingPairSet> {
    if tree.layers.len() < 2 {
        return Err(Error::NoRefinementLayer);
    }
    let parent = select_best(&tree.layers[0].candidates)?.clone();
    let parent_reward = parent.scored_reward()?;
    let mut pairs = Vec::new();
    for c in &tree.layers[1].candidates {
        let r = c.scored_reward()?;
        if c.parent_id.as_deref() == Some(parent.id.as_str()) && r > parent_reward {
            pairs.push((c.clone(), r));
        }
    }
    Ok(ImprovingPairSet {
        parent,
        parent_reward,
        pairs,
    })
}

/// Records for one tree: one triple, and one improving pair per refinement
/// layer whose best candidate strictly beats its parent.
pub fn tree_records(tree: &SampleTree, iteration: u32) -> Result<Vec<TrainingRecord>> {
    require_complete(tree)?;
    let best = bon_select(tree)?;
    let mut out = vec![TrainingRecord::triple(tree, best, iteration)?];
    for layer in tree.layers.iter().skip(1) {
        let step_best = select_best(&layer.candidates)?;
        let parent_id = step_best
            .parent_id
            .as_deref()
            .ok_or_else(|| Error::Data(format!("refinement {} has no parent", step_best.id)))?;
        let parent = tree
            .candidate(parent_id)
            .ok_or_else(|| Error::Data(format!("unresolvable parent {parent_id}")))?;
        let (r1, r0) = (step_best.scored_reward()?, parent.scored_reward()?);
        if r1 > r0 {
            out.push(TrainingRecord {
                kind: RecordKind::ImprovingPair,
                prompt_id: Some(tree.prompt.id.clone()),
                instruction: tree.prompt.instruction.clone(),
                preference: tree.prompt.preference_text().map(str::to_string),
                response: step_best.text.clone(),
                parent_response: Some(parent.text.clone()),
                feedback: layer.feedback.as_ref().map(|f| f.text.clone()),
                reward: Some(r1),
                parent_reward: Some(r0),
                layer: Some(layer.index),
                iteration,
            });
        }
    }
    Ok(out)
}

pub fn build_iteration_dataset(trees: &[SampleTree], iteration: u32) -> Result<Vec<TrainingRecord>> {
    if iteration == 0 {
        return Err(Error::Data("iterations start at 1".into()));
    }
    let mut out = Vec::with_capacity(trees.len() * 2);
    for t in trees {
        out.extend(tree_records(t, iteration)?);
    }
    Ok(out)
}

/// A labeled example passed through unchanged.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftExample {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub instruction: String,
    pub response: String,
}

impl From<SftExample> for TrainingRecord {
    fn from(e: SftExample) -> Self {
        Self {
            kind: RecordKind::SftPassthrough,
            prompt_id: e.id,
            instruction: e.instruction,
            preference: None,
            response: e.response,
            parent_response: None,
            feedback: None,
            reward: None,
            parent_reward: None,
            layer: None,
            iteration: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationDataset {
    pub iteration: u32,
    pub records: Vec<TrainingRecord>,
}

/// Concatenates the labeled set (as iteration 0) and iterations `1..=k`.
pub fn merge_iterations(
    iterations: Vec<IterationDataset>,
    sft: Option<Vec<SftExample>>,
) -> Result<Vec<TrainingRecord>> {
    let mut seen = BTreeSet::new();
    for it in &iterations {
        if it.iteration == 0 {
            return Err(Error::Data("iteration 0 is reserved for labeled data".into()));
        }
        if !seen.insert(it.iteration) {
            return Err(Error::DuplicateIteration(it.iteration));
        }
        if let Some(r) = it.records.iter().find(|r| r.iteration != it.iteration) {
            return Err(Error::Data(format!(
                "record tagged iteration {} inside dataset for iteration {}",
                r.iteration, it.iteration
            )));
        }
    }
    if seen.iter().copied().ne(1..=seen.len() as u32) {
        return Err(Error::Data(format!(
            "iterations must be consecutive from 1, got {seen:?}"
        )));
    }
    let mut iterations = iterations;
    iterations.sort_by_key(|it| it.iteration);
    let mut out: Vec<TrainingRecord> = sft
        .unwrap_or_default()
        .into_iter()
        .map(TrainingRecord::from)
        .collect();
    for it in iterations {
        out.extend(it.records);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftView {
    pub instruction: String,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceView {
    pub instruction: String,
    pub preference: Option<String>,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinementView {
    pub instruction: String,
    pub preference: Option<String>,
    pub parent_response: String,
    pub feedback: Option<String>,
    pub response: String,
}

pub const SFT_VIEW: &str = "sft.jsonl";
pub const PREFERENCE_VIEW: &str = "preference.jsonl";
pub const REFINEMENT_VIEW: &str = "refinement.jsonl";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewCounts {
    pub sft: usize,
    pub preference: usize,
    pub refinement: usize,
}

impl ViewCounts {
    pub fn total(&self) -> usize {
        self.sft + self.preference + self.refinement
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainerViews {
    pub sft: Vec<SftView>,
    pub preference: Vec<PreferenceView>,
    pub refinement: Vec<RefinementView>,
}

impl TrainerViews {
    pub fn project(records: &[TrainingRecord]) -> Self {
        let mut v = Self::default();
        for r in records {
            match r.kind {
                RecordKind::SftPassthrough => v.sft.push(SftView {
                    instruction: r.instruction.clone(),
                    response: r.response.clone(),
                }),
                RecordKind::ResponseTriple => v.preference.push(PreferenceView {
                    instruction: r.instruction.clone(),
                    preference: r.preference.clone(),
                    response: r.response.clone(),
                }),
                RecordKind::ImprovingPair => v.refinement.push(RefinementView {
                    instruction: r.instruction.clone(),
                    preference: r.preference.clone(),
                    parent_response: r.parent_response.clone().unwrap_or_default(),
                    feedback: r.feedback.clone(),
                    response: r.response.clone(),
                }),
            }
        }
        v
    }

    pub fn counts(&self) -> ViewCounts {
        ViewCounts {
            sft: self.sft.len(),
            preference: self.preference.len(),
            refinement: self.refinement.len(),
        }
    }

    pub fn read(dir: &Path) -> Result<Self> {
        Ok(Self {
            sft: jsonl::read_jsonl(&dir.join(SFT_VIEW))?,
            preference: jsonl::read_jsonl(&dir.join(PREFERENCE_VIEW))?,
            refinement: jsonl::read_jsonl(&dir.join(REFINEMENT_VIEW))?,
        })
    }
}

/// Writes the three trainer views; all three files exist even when empty.
pub fn emit_trainer_views(records: &[TrainingRecord], out_dir: &Path) -> Result<ViewCounts> {
    if records.is_empty() {
        return Err(Error::Data("merged dataset is empty".into()));
    }
    let views = TrainerViews::project(records);
    jsonl::write_jsonl(&out_dir.join(SFT_VIEW), &views.sft)?;
    jsonl::write_jsonl(&out_dir.join(PREFERENCE_VIEW), &views.preference)?;
    jsonl::write_jsonl(&out_dir.join(REFINEMENT_VIEW), &views.refinement)?;
    Ok(views.counts())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedHeader {
    pub manifest_digest: String,
    pub pair_rule: String,
    pub iterations: Vec<u32>,
    pub records: usize,
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    header: MergedHeader,
}

/// Merged dataset file: a header line followed by one record per line.
pub fn write_merged(path: &Path, header: &MergedHeader, records: &[TrainingRecord]) -> Result<()> {
    let mut text = jsonl::to_line(&HeaderLine {
        header: header.clone(),
    })?;
    text.push_str(&jsonl::encode(records)?);
    jsonl::write_atomic(path, text.as_bytes())
}

pub fn read_merged(path: &Path) -> Result<(MergedHeader, Vec<TrainingRecord>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let parse_err = |line: usize, e: serde_json::Error| Error::Parse {
        path: path.display().to_string(),
        line: line + 1,
        message: e.to_string(),
    };
    let (i, first) = lines
        .next()
        .ok_or_else(|| Error::Data(format!("{} is empty", path.display())))?;
    let header: HeaderLine = serde_json::from_str(first).map_err(|e| parse_err(i, e))?;
    let records = lines
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| parse_err(i, e)))
        .collect::<Result<Vec<TrainingRecord>>>()?;
    Ok((header.header, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Feedback, Layer, PromptRecord, TreeStatus};

    fn cand(id: &str, layer: usize, index: usize, parent: Option<&str>, r: f64) -> Candidate {
        Candidate {
            id: id.into(),
            prompt_id: "p".into(),
            layer,
            index,
            parent_id: parent.map(str::to_string),
            feedback_id: None,
            text: format!("text-{id}"),
            reward: Some(r),
            gen_calls_used: 1,
        }
    }

    /// Two-layer tree with layer-0 rewards `l0` and layer-1 rewards `l1`.
    pub(crate) fn two_layer(l0: &[f64], l1: &[f64]) -> SampleTree {
        let mut tree = SampleTree::empty(PromptRecord::new("p", "x").with_preference("z"));
        let mut layer0 = Layer::new(0);
        for (i, &r) in l0.iter().enumerate() {
            layer0.candidates.push(cand(&format!("a{i}"), 0, i, None, r));
        }
        let best = select_best(&layer0.candidates).unwrap().id.clone();
        let mut layer1 = Layer::new(1);
        layer1.feedback = Some(Feedback {
            id: "f1".into(),
            prompt_id: "p".into(),
            target_candidate_id: best.clone(),
            text: "do better".into(),
        });
        for (i, &r) in l1.iter().enumerate() {
            layer1.candidates.push(cand(&format!("b{i}"), 1, i, Some(&best), r));
        }
        tree.layers = vec![layer0, layer1];
        tree.status = TreeStatus::Complete;
        tree
    }

    #[test]
    fn pairs_filter_strictly() {
        let t = two_layer(&[0.5, 0.1], &[0.4, 0.6, 0.7]);
        let set = improving_pairs(&t).unwrap();
        assert_eq!(set.parent.id, "a0");
        let rewards: Vec<f64> = set.pairs.iter().map(|p| p.1).collect();
        assert_eq!(rewards, [0.6, 0.7]);

        let none = improving_pairs(&two_layer(&[0.5], &[0.1, 0.2])).unwrap();
        assert!(none.pairs.is_empty());
        let tie = improving_pairs(&two_layer(&[0.5], &[0.5])).unwrap();
        assert!(tie.pairs.is_empty());
    }

    #[test]
    fn pairs_need_refinement_layer() {
        let mut t = two_layer(&[0.5], &[0.6]);
        t.layers.truncate(1);
        assert!(matches!(improving_pairs(&t), Err(Error::NoRefinementLayer)));
    }

    #[test]
    fn improvement_branch_emits_two_records() {
        let t = two_layer(&[0.5], &[0.7, 0.2]);
        let recs = tree_records(&t, 1).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].kind, RecordKind::ResponseTriple);
        assert_eq!(recs[0].reward, Some(0.7));
        assert_eq!(recs[0].response, "text-b0");
        assert_eq!(recs[1].kind, RecordKind::ImprovingPair);
        assert_eq!(recs[1].parent_response.as_deref(), Some("text-a0"));
        assert_eq!(recs[1].feedback.as_deref(), Some("do better"));
        assert_eq!(recs[1].preference.as_deref(), Some("z"));
        for r in &recs {
            r.validate().unwrap();
        }
    }

    #[test]
    fn tie_branch_keeps_initial() {
        let recs = tree_records(&two_layer(&[0.5], &[0.5]), 1).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].response, "text-a0");
        assert_eq!(recs[0].reward, Some(0.5));
    }

    #[test]
    fn unscored_and_incomplete_trees_error() {
        let mut t = two_layer(&[0.5], &[0.7]);
        t.layers[1].candidates[0].reward = None;
        assert!(build_iteration_dataset(&[t], 1).is_err());
        let mut t = two_layer(&[0.5], &[0.7]);
        t.status = TreeStatus::Partial;
        assert!(build_iteration_dataset(&[t], 1).is_err());
    }

    fn records(n: usize, iteration: u32) -> Vec<TrainingRecord> {
        let t = two_layer(&[0.5], &[0.1]);
        (0..n).map(|_| tree_records(&t, iteration).unwrap().remove(0)).collect()
    }

    fn sft(n: usize) -> Vec<SftExample> {
        (0..n)
            .map(|i| SftExample {
                id: Some(format!("s{i}")),
                instruction: format!("q{i}"),
                response: format!("a{i}"),
            })
            .collect()
    }

    #[test]
    fn merge_counts() {
        let its = (1..=3)
            .map(|k| IterationDataset {
                iteration: k,
                records: records(10_000, k),
            })
            .collect();
        let merged = merge_iterations(its, Some(sft(21_934))).unwrap();
        assert_eq!(merged.len(), 51_934);
        assert_eq!(merged[0].kind, RecordKind::SftPassthrough);
        assert_eq!(merged[0].iteration, 0);
        let tags: BTreeSet<u32> = merged.iter().map(|r| r.iteration).collect();
        assert_eq!(tags.into_iter().collect::<Vec<_>>(), [0, 1, 2, 3]);
    }

    #[test]
    fn merge_guards() {
        let only_sft = merge_iterations(vec![], Some(sft(3))).unwrap();
        assert!(only_sft.iter().all(|r| r.kind == RecordKind::SftPassthrough));
        let dup = vec![
            IterationDataset { iteration: 1, records: records(1, 1) },
            IterationDataset { iteration: 1, records: records(1, 1) },
        ];
        assert!(matches!(merge_iterations(dup, None), Err(Error::DuplicateIteration(1))));
        let gap = vec![
            IterationDataset { iteration: 1, records: records(1, 1) },
            IterationDataset { iteration: 3, records: records(1, 3) },
        ];
        assert!(merge_iterations(gap, None).is_err());
        let mislabeled = vec![IterationDataset { iteration: 1, records: records(1, 2) }];
        assert!(merge_iterations(mislabeled, None).is_err());
    }

    #[test]
    fn views_partition_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut recs = build_iteration_dataset(
            &[two_layer(&[0.5], &[0.7]), two_layer(&[0.5], &[0.1])],
            1,
        )
        .unwrap();
        recs.extend(sft(2).into_iter().map(TrainingRecord::from));
        let counts = emit_trainer_views(&recs, dir.path()).unwrap();
        assert_eq!(counts.total(), recs.len());
        assert_eq!(counts, ViewCounts { sft: 2, preference: 2, refinement: 1 });
        assert_eq!(TrainerViews::read(dir.path()).unwrap(), TrainerViews::project(&recs));
    }

    #[test]
    fn triples_only_leave_empty_files() {
        let dir = tempfile::tempdir().unwrap();
        let recs = records(3, 1);
        let counts = emit_trainer_views(&recs, dir.path()).unwrap();
        assert_eq!(counts, ViewCounts { sft: 0, preference: 3, refinement: 0 });
        assert_eq!(std::fs::read_to_string(dir.path().join(SFT_VIEW)).unwrap(), "");
        assert!(dir.path().join(REFINEMENT_VIEW).exists());
        assert!(emit_trainer_views(&[], dir.path()).is_err());
    }

    #[test]
    fn merged_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("merged.jsonl");
        let recs = build_iteration_dataset(&[two_layer(&[0.5], &[0.7])], 1).unwrap();
        let header = MergedHeader {
            manifest_digest: "abc".into(),
            pair_rule: PAIR_RULE.into(),
            iterations: vec![1],
            records: recs.len(),
        };
        write_merged(&p, &header, &recs).unwrap();
        let (h, back) = read_merged(&p).unwrap();
        assert_eq!(h, header);
        assert_eq!(back, recs);
    }
}

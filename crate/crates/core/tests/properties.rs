mod common;

use std::collections::HashSet;

use common::{landscape, prompt, to_json};
use prs_core::backends::{ContextKind, MockLandscape, MockLandscapeConfig};
use prs_core::dataset::{build_iteration_dataset, RecordKind};
use prs_core::samplers::{bon_select, verify_tree, Sampler};
use prs_core::select::select_best;
use prs_core::types::{Method, SampleTree, SamplingConfig};
use prs_core::{PromptRecord, TemplateSet};
use proptest::prelude::*;

fn method() -> impl Strategy<Value = Method> {
    prop::sample::select(Method::ALL.to_vec())
}

fn grow(seed: u64, dim: usize, method: Method, n: usize, d: usize, feedback: bool) -> SampleTree {
    let m = landscape(dim, seed);
    let t = TemplateSet::default();
    let cfg = SamplingConfig::new(method, n, d.min(n))
        .with_seed(seed)
        .with_feedback(feedback);
    Sampler::new(&t, &m, &m).run(&prompt(&format!("r{seed}")), &cfg).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn trees_respect_budget_parents_and_union(
        seed in any::<u64>(),
        dim in 1usize..6,
        method in method(),
        n in 1usize..24,
        d in 1usize..6,
        feedback in any::<bool>(),
    ) {
        let tree = grow(seed, dim, method, n, d, feedback);
        let cfg = SamplingConfig::new(method, n, d.min(n)).with_seed(seed).with_feedback(feedback);
        verify_tree(&tree, &cfg).unwrap();
        prop_assert_eq!(tree.ledger.generation_calls(), n as u64);
        prop_assert_eq!(tree.layer_sizes().iter().sum::<usize>(), n);

        let ids: HashSet<_> = tree.candidates().map(|c| c.id.as_str()).collect();
        prop_assert_eq!(ids.len(), n);

        for l in 1..tree.layers.len() {
            let best = select_best(tree.layers[..l].iter().flat_map(|x| &x.candidates)).unwrap();
            for c in &tree.layers[l].candidates {
                prop_assert_eq!(c.parent_id.as_deref(), Some(best.id.as_str()));
            }
        }

        let top = bon_select(&tree).unwrap().reward.unwrap();
        prop_assert!(top >= tree.layers[0].max_reward().unwrap());

        let back: SampleTree = serde_json::from_str(&to_json(&tree)).unwrap();
        prop_assert_eq!(to_json(&back), to_json(&tree));
    }

    #[test]
    fn dataset_permutes_with_trees(seed in any::<u64>(), count in 1usize..8, shift in 0usize..8) {
        let trees: Vec<_> = (0..count)
            .map(|i| grow(seed.wrapping_add(i as u64), 3, Method::Prs, 8, 2, true))
            .collect();
        let mut rotated = trees.clone();
        rotated.rotate_left(shift % count);
        let a = build_iteration_dataset(&trees, 1).unwrap();
        let b = build_iteration_dataset(&rotated, 1).unwrap();
        let key = |rs: &[prs_core::dataset::TrainingRecord]| {
            let mut v: Vec<String> = rs.iter().map(to_json).collect();
            v.sort();
            v
        };
        prop_assert_eq!(key(&a), key(&b));

        for tree in &trees {
            let mine: Vec<_> = a.iter().filter(|r| r.prompt_id.as_deref() == Some(&tree.prompt.id)).collect();
            prop_assert!(!mine.is_empty() && mine.len() <= 2);
            let triple = mine.iter().find(|r| r.kind == RecordKind::ResponseTriple).unwrap();
            prop_assert_eq!(triple.reward, bon_select(tree).unwrap().reward);
            prop_assert!(triple.parent_response.is_none());
        }
    }

    #[test]
    fn templates_render_instruction_once(
        instruction in "[a-z]{1,8}( [a-z]{1,8}){0,6}",
        preference in prop::option::of("[A-Z][a-z ]{3,20}\\."),
        use_preference in any::<bool>(),
    ) {
        let t = TemplateSet::default();
        let mut record = PromptRecord::new("x", format!("<<{instruction}>>"));
        record.preference = preference.clone();
        let render = |on: bool| t.assemble(ContextKind::Initial, &record, None, None, on).unwrap();
        let out = render(use_preference);
        prop_assert_eq!(out.user.matches(&record.instruction).count(), 1);
        prop_assert_eq!(&out, &render(use_preference));
        prop_assert_eq!(render(true) != render(false), preference.is_some());
    }

    #[test]
    fn mock_reward_is_pure_and_nonpositive(seed in any::<u64>()) {
        let m = MockLandscape::new(MockLandscapeConfig { seed, ..MockLandscapeConfig::default() }).unwrap();
        let tree = grow(seed, MockLandscapeConfig::default().dim, Method::Rand, 2, 1, false);
        for c in tree.candidates() {
            let r = m.score_text(&c.text).unwrap();
            prop_assert!(r <= 0.0);
            prop_assert_eq!(r.to_bits(), m.score_text(&c.text).unwrap().to_bits());
            prop_assert_eq!(Some(r), c.reward);
        }
    }
}

mod common;

use common::*;
use prs_core::backends::ContextKind;
use prs_core::samplers::{bon_select, sweep_depth, tree_summary, verify_tree, Sampler};
use prs_core::select::select_best;
use prs_core::types::{Method, PromptRecord, SampleTree, SamplingConfig, TreeStatus};
use prs_core::{Error, TemplateSet};

fn run(method: Method, n: usize, depth: usize, seed: u64) -> SampleTree {
    let m = landscape(8, 3);
    let t = TemplateSet::default();
    let cfg = SamplingConfig::new(method, n, depth).with_seed(seed);
    Sampler::new(&t, &m, &m).run(&prompt("p"), &cfg).unwrap()
}

#[test]
fn prs_layers_follow_schedule_and_argmax() {
    let m = landscape(8, 3);
    let t = TemplateSet::default();
    let cfg = SamplingConfig::new(Method::Prs, 16, 3).with_seed(1);
    let tree = Sampler::new(&t, &m, &m).run(&prompt("p"), &cfg).unwrap();
    assert_eq!(tree.layer_sizes(), [6, 5, 5]);
    assert_eq!(tree.status, TreeStatus::Complete);
    verify_tree(&tree, &cfg).unwrap();
    let l0 = select_best(&tree.layers[0].candidates).unwrap();
    assert!(tree.layers[1]
        .candidates
        .iter()
        .all(|c| c.parent_id.as_deref() == Some(l0.id.as_str())));
    // feedback is produced fresh for each refinement layer
    let f1 = tree.layers[1].feedback.as_ref().unwrap();
    let f2 = tree.layers[2].feedback.as_ref().unwrap();
    assert_ne!(f1.id, f2.id);
    assert_eq!(tree.ledger.feedback_calls(), 2);
    assert_eq!(tree.ledger.generation_calls(), 16);
    assert_eq!(tree.ledger.reward_calls(), 16);
}

#[test]
fn rand_omits_preference_and_prand_includes_it() {
    let m = landscape(4, 1);
    let t = TemplateSet::default();
    let rec = Recording::new(landscape(4, 1));
    let p = prompt("p");
    let z = p.preference.clone().unwrap();
    let tree = Sampler::new(&t, &rec, &m)
        .run(&p, &SamplingConfig::new(Method::Rand, 4, 1))
        .unwrap();
    assert_eq!(tree.layer_sizes(), [4]);
    assert!(tree.candidates().all(|c| c.parent_id.is_none()));
    assert_eq!(tree.ledger.feedback_calls(), 0);
    assert!(rec.seen.lock().unwrap().iter().all(|a| !a.user.contains(&z)));

    let rec = Recording::new(landscape(4, 1));
    let tree = Sampler::new(&t, &rec, &m)
        .run(&p, &SamplingConfig::new(Method::Prand, 16, 1))
        .unwrap();
    assert_eq!(tree.num_candidates(), 16);
    assert!(rec.seen.lock().unwrap().iter().all(|a| a.user.contains(&z)));
}

#[test]
fn prand_requires_preference() {
    let m = landscape(4, 1);
    let t = TemplateSet::default();
    let bare = PromptRecord::new("q", "x");
    let err = Sampler::new(&t, &m, &m)
        .run(&bare, &SamplingConfig::new(Method::Prand, 4, 1))
        .unwrap_err();
    assert!(matches!(err.error, Error::PrandRequiresPreference(_)));
    let blank = PromptRecord::new("q", "x").with_preference("   ");
    assert!(Sampler::new(&t, &m, &m)
        .run(&blank, &SamplingConfig::new(Method::Prand, 4, 1))
        .is_err());
}

#[test]
fn method_specific_entry_points_check_method() {
    let m = landscape(4, 1);
    let t = TemplateSet::default();
    let s = Sampler::new(&t, &m, &m);
    let cfg = SamplingConfig::new(Method::Rand, 4, 1);
    assert!(s.run_rand(&prompt("p"), &cfg).is_ok());
    assert!(s.run_prs(&prompt("p"), &cfg).is_err());
}

#[test]
fn prs_depth_one_equals_prand() {
    for n in [1, 8, 32] {
        let a = run(Method::Prs, n, 1, 5);
        let b = run(Method::Prand, n, 1, 5);
        assert_eq!(to_json(&a), to_json(&b));
    }
}

#[test]
fn prs_single_layer_schedule_equals_prand() {
    let m = landscape(8, 3);
    let t = TemplateSet::default();
    let s = Sampler::new(&t, &m, &m);
    let a = s
        .run(&prompt("p"), &SamplingConfig::new(Method::Prs, 12, 1).with_schedule(vec![12]))
        .unwrap();
    let b = s.run(&prompt("p"), &SamplingConfig::new(Method::Prand, 12, 1)).unwrap();
    assert_eq!(to_json(&a), to_json(&b));
}

#[test]
fn greedy_equals_prs_width_one_without_feedback() {
    let m = landscape(8, 3);
    let t = TemplateSet::default();
    let s = Sampler::new(&t, &m, &m);
    for n in [1, 5, 16] {
        let g = s.run(&prompt("p"), &SamplingConfig::new(Method::Greedy, n, 1)).unwrap();
        let p = s
            .run(
                &prompt("p"),
                &SamplingConfig::new(Method::Prs, n, n).with_feedback(false),
            )
            .unwrap();
        assert_eq!(to_json(&g), to_json(&p));
        assert_eq!(g.layer_sizes(), vec![1; n]);
    }
    let one = s.run(&prompt("p"), &SamplingConfig::new(Method::Greedy, 1, 1)).unwrap();
    let prand = s.run(&prompt("p"), &SamplingConfig::new(Method::Prand, 1, 1)).unwrap();
    assert_eq!(to_json(&one), to_json(&prand));
}

#[test]
fn greedy_trace_updates_best() {
    let t = TemplateSet::default();
    let gen = Counter::default();
    let reward = ScriptedReward(vec![-2.0, -1.0, -3.0]);
    let tree = Sampler::new(&t, &gen, &reward)
        .run(&prompt("p"), &SamplingConfig::new(Method::Greedy, 3, 1))
        .unwrap();
    let c: Vec<_> = tree.candidates().collect();
    assert_eq!(bon_select(&tree).unwrap().id, c[1].id);
    assert_eq!(c[1].parent_id.as_deref(), Some(c[0].id.as_str()));
    assert_eq!(c[2].parent_id.as_deref(), Some(c[1].id.as_str()));
}

#[test]
fn greedy_keeps_initial_parent_when_refinements_are_worse() {
    let t = TemplateSet::default();
    let gen = Counter::default();
    let reward = ScriptedReward(vec![0.0, -1.0, -2.0, -3.0, -4.0]);
    let tree = Sampler::new(&t, &gen, &reward)
        .run(&prompt("p"), &SamplingConfig::new(Method::Greedy, 5, 1))
        .unwrap();
    let root = tree.layers[0].candidates[0].id.clone();
    assert!(tree.layers[1..]
        .iter()
        .all(|l| l.candidates[0].parent_id.as_deref() == Some(root.as_str())));
}

#[test]
fn bon_select_examples() {
    let t = TemplateSet::default();
    let gen = Counter::default();
    let reward = ScriptedReward(vec![0.1, 0.9, 0.4]);
    let tree = Sampler::new(&t, &gen, &reward)
        .run(&prompt("p"), &SamplingConfig::new(Method::Rand, 3, 1))
        .unwrap();
    assert_eq!(bon_select(&tree).unwrap().reward, Some(0.9));

    let gen = Counter::default();
    let reward = ScriptedReward(vec![-4.0]);
    let tree = Sampler::new(&t, &gen, &reward)
        .run(&prompt("p"), &SamplingConfig::new(Method::Rand, 1, 1))
        .unwrap();
    assert_eq!(bon_select(&tree).unwrap().id, tree.layers[0].candidates[0].id);
}

#[test]
fn refinement_layer_can_win() {
    // wide initial spread, low refinement noise and an oracle hint of one
    // unit: every refinement lands strictly closer to the target
    let cfg = prs_core::backends::MockLandscapeConfig {
        dim: 4,
        sigma0: 3.0,
        sigma1: 0.01,
        feedback_gain: 1.0,
        seed: 2,
    };
    let m = prs_core::backends::MockLandscape::new(cfg).unwrap();
    let t = TemplateSet::default();
    let tree = Sampler::new(&t, &m, &m)
        .run(
            &prompt("p"),
            &SamplingConfig::new(Method::Prs, 4, 2).with_schedule(vec![2, 2]),
        )
        .unwrap();
    assert!(tree.layers[1].max_reward().unwrap() > tree.layers[0].max_reward().unwrap());
    assert_eq!(bon_select(&tree).unwrap().layer, 1);
}

#[test]
fn feedback_kinds_in_call_order() {
    let m = landscape(4, 1);
    let t = TemplateSet::default();
    let rec = Recording::new(landscape(4, 1));
    Sampler::new(&t, &rec, &m)
        .run(&prompt("p"), &SamplingConfig::new(Method::Prs, 4, 2))
        .unwrap();
    let kinds = rec.kinds();
    assert_eq!(kinds.iter().filter(|k| **k == ContextKind::Initial).count(), 2);
    assert_eq!(kinds.iter().filter(|k| **k == ContextKind::Feedback).count(), 1);
    assert_eq!(
        kinds.iter().filter(|k| **k == ContextKind::RefineWithFeedback).count(),
        2
    );
    let rec = Recording::new(landscape(4, 1));
    Sampler::new(&t, &rec, &m)
        .run(
            &prompt("p"),
            &SamplingConfig::new(Method::Prs, 4, 2).with_feedback(false),
        )
        .unwrap();
    assert!(rec.kinds().contains(&ContextKind::RefineWithoutFeedback));
    assert!(!rec.kinds().contains(&ContextKind::Feedback));
}

#[test]
fn run_all_keeps_order_and_is_deterministic() {
    let m = landscape(8, 3);
    let t = TemplateSet::default();
    let s = Sampler::new(&t, &m, &m);
    let ps = prompts(12);
    let cfg = SamplingConfig::new(Method::Prs, 8, 2).with_seed(4);
    let a: Vec<String> = s.run_all(&ps, &cfg).into_iter().map(|r| to_json(&r.unwrap())).collect();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let b: Vec<String> = pool.install(|| s.run_all(&ps, &cfg).into_iter().map(|r| to_json(&r.unwrap())).collect());
    assert_eq!(a, b);
    for (tree, p) in s.run_all(&ps, &cfg).into_iter().zip(&ps) {
        assert_eq!(tree.unwrap().prompt.id, p.id);
    }
}

#[test]
fn interrupted_generation_resumes_to_identical_tree() {
    let m = landscape(8, 3);
    let t = TemplateSet::default();
    let cfg = SamplingConfig::new(Method::Prs, 12, 3).with_seed(9);
    let fresh = Sampler::new(&t, &m, &m).run(&prompt("p"), &cfg).unwrap();
    // 12 generations + 2 feedback calls
    for budget in 0..14 {
        let flaky = FailAfter::new(landscape(8, 3), budget);
        let err = Sampler::new(&t, &flaky, &m).run(&prompt("p"), &cfg).unwrap_err();
        assert_eq!(err.tree.status, TreeStatus::Partial);
        assert!(err.tree.error.is_some());
        assert!(err.tree.ledger.generation_calls() + err.tree.ledger.feedback_calls() <= budget as u64);
        // persisted and reloaded, then resumed with a healthy backend
        let reloaded: SampleTree = serde_json::from_str(&to_json(&err.tree)).unwrap();
        let resumed = Sampler::new(&t, &m, &m).resume(reloaded, &cfg).unwrap();
        assert_eq!(to_json(&resumed), to_json(&fresh), "budget {budget}");
    }
}

#[test]
fn interrupted_scoring_keeps_unscored_candidates() {
    let m = landscape(8, 3);
    let t = TemplateSet::default();
    let cfg = SamplingConfig::new(Method::Prs, 8, 2).with_seed(2);
    let fresh = Sampler::new(&t, &m, &m).run(&prompt("p"), &cfg).unwrap();
    for budget in 0..8 {
        let flaky = FailAfter::new(landscape(8, 3), budget);
        let err = Sampler::new(&t, &m, &flaky).run(&prompt("p"), &cfg).unwrap_err();
        let resumed = Sampler::new(&t, &m, &m).resume(err.tree, &cfg).unwrap();
        assert_eq!(to_json(&resumed), to_json(&fresh), "budget {budget}");
        assert_eq!(resumed.ledger, fresh.ledger);
    }
}

#[test]
fn complete_trees_resume_unchanged() {
    let m = landscape(8, 3);
    let t = TemplateSet::default();
    let cfg = SamplingConfig::new(Method::Prs, 8, 2);
    let s = Sampler::new(&t, &m, &m);
    let tree = s.run(&prompt("p"), &cfg).unwrap();
    assert_eq!(to_json(&s.resume(tree.clone(), &cfg).unwrap()), to_json(&tree));
}

#[test]
fn sweep_rows_and_degenerate_cells() {
    let m = landscape(8, 3);
    let t = TemplateSet::default();
    let s = Sampler::new(&t, &m, &m);
    let ps = prompts(4);
    let base = SamplingConfig::new(Method::Prs, 16, 1).with_feedback(false);
    let rows = sweep_depth(&s, &ps, 16, &[1, 2, 4, 8, 16], &base).unwrap();
    assert_eq!(rows.len(), 5);
    assert_eq!(rows.iter().map(|r| r.width).collect::<Vec<_>>(), [16, 8, 4, 2, 1]);

    let mean = |method: Method| {
        let cfg = SamplingConfig::new(method, 16, 1);
        let s: Vec<(f64, f64)> = s
            .run_all(&ps, &cfg)
            .into_iter()
            .map(|r| tree_summary(&r.unwrap()).unwrap())
            .collect();
        (
            s.iter().map(|x| x.0).sum::<f64>() / s.len() as f64,
            s.iter().map(|x| x.1).sum::<f64>() / s.len() as f64,
        )
    };
    let prand = mean(Method::Prand);
    assert_eq!((rows[0].mean_best.unwrap(), rows[0].mean_top3.unwrap()), prand);
    let greedy = mean(Method::Greedy);
    assert_eq!((rows[4].mean_best.unwrap(), rows[4].mean_top3.unwrap()), greedy);

    assert!(matches!(
        sweep_depth(&s, &ps, 16, &[32], &base),
        Err(Error::BudgetSmallerThanDepth { .. })
    ));
}

#[test]
fn sweep_marks_failed_cells() {
    let m = landscape(8, 3);
    let t = TemplateSet::default();
    // enough calls for the depth-1 cell, then everything fails
    let flaky = FailAfter::new(landscape(8, 3), 8);
    let s = Sampler::new(&t, &flaky, &m);
    let base = SamplingConfig::new(Method::Prs, 8, 1);
    let rows = sweep_depth(&s, &prompts(1), 8, &[1, 2], &base).unwrap();
    assert!(rows[0].error.is_none());
    assert!(rows[1].mean_best.is_none() && rows[1].error.is_some());
    let mut csv = Vec::new();
    prs_core::samplers::write_sweep_csv(&rows, &mut csv).unwrap();
    assert!(String::from_utf8(csv).unwrap().contains("2,4,failed,failed"));
}

#[test]
fn reward_sees_preference_only_when_asked() {
    use prs_core::backends::{RewardBackend, ScoreInputs};
    use std::sync::Mutex;
    struct Spy(Mutex<Vec<ScoreInputs>>, prs_core::backends::MockLandscape);
    impl RewardBackend for Spy {
        fn score(&self, i: &ScoreInputs) -> prs_core::Result<f64> {
            self.0.lock().unwrap().push(i.clone());
            self.1.score(i)
        }
        fn identity(&self) -> serde_json::Value {
            serde_json::json!({})
        }
    }
    let m = landscape(4, 1);
    let t = TemplateSet::default();
    let spy = Spy(Mutex::new(vec![]), landscape(4, 1));
    let mut cfg = SamplingConfig::new(Method::Prand, 2, 1);
    Sampler::new(&t, &m, &spy).run(&prompt("p"), &cfg).unwrap();
    assert!(spy.0.lock().unwrap().iter().all(|i| i.preference.is_none()));
    cfg.reward_sees_preference = true;
    let spy = Spy(Mutex::new(vec![]), landscape(4, 1));
    Sampler::new(&t, &m, &spy).run(&prompt("p"), &cfg).unwrap();
    assert!(spy
        .0
        .lock()
        .unwrap()
        .iter()
        .all(|i| i.preference.is_some() && i.instruction.ends_with("I prefer short answers.")));
}

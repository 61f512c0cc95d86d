//! Randomized invariants.

mod common;

use common::*;
use flaicf_core::attention::{design1_weights, design2_weights, smoothed_softmax};
use flaicf_core::config::{Design, ModelConfig, ModelKind};
use flaicf_core::data::{k_core_filter, split_per_user, InteractionDataset, Vocab};
use flaicf_core::eval::{hr_at_n, ndcg_at_n};
use flaicf_core::predict::{forward, predict, PredictionContext};
use flaicf_core::train::{adagrad_step, all_configs, backward, sample_negatives, OptimizerState};
use proptest::prelude::*;

fn dataset_from(edges: &[(usize, usize)], users: usize, items: usize) -> InteractionDataset {
    // Only users and items that occur, in first-appearance order.
    let mut uv = Vocab::new();
    let mut iv = Vocab::new();
    let pairs: Vec<(usize, usize)> = edges
        .iter()
        .map(|&(u, i)| (uv.intern(&format!("u{}", u % users)), iv.intern(&format!("i{}", i % items))))
        .collect();
    InteractionDataset::from_pairs(uv, iv, pairs)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn history_order_does_not_matter(seed in any::<u64>(), cfg_idx in 0usize..8, len in 1usize..7) {
        let cfg = all_configs(6).swap_remove(cfg_idx);
        let mut r = rng(seed);
        let params = random_params(&cfg, 10, 2, 0.5, &mut r);
        let items = distinct_items(10, len + 1, &mut r);
        let mut history = items[1..].to_vec();
        let a = predict(&PredictionContext::new(1, items[0], history.clone()).unwrap(), &params, &cfg).unwrap();
        history.reverse();
        history.rotate_left(len / 2);
        let b = predict(&PredictionContext::new(1, items[0], history).unwrap(), &params, &cfg).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn smoothed_softmax_preserves_order(logits in prop::collection::vec(-20.0f64..20.0, 1..50), beta in 0.05f64..=1.0) {
        let w = smoothed_softmax(&logits, beta).unwrap();
        for i in 0..logits.len() {
            for j in 0..logits.len() {
                if logits[i] < logits[j] {
                    prop_assert!(w[i] <= w[j]);
                }
            }
        }
        if beta == 1.0 {
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn design_identities(seed in any::<u64>(), len in 1usize..8) {
        let mut r = rng(seed);
        let cfg = ModelConfig::new(ModelKind::FlaNais, 8);
        let params = random_params(&cfg.clone().with_design(Design::Design1), len + 1, 1, 0.5, &mut r);
        let p = params.target_emb.row(0);
        let history: Vec<&[f64]> = (1..=len).map(|j| params.history_emb.row(j)).collect();
        let d1 = design1_weights(p, &history, &params, 0.7).unwrap();
        let b = d1.item_weights.unwrap();
        let m = d1.feature_weights.unwrap();
        for (j, bj) in b.iter().enumerate() {
            prop_assert!((m.row(j).iter().sum::<f64>() - bj).abs() < 1e-9);
        }
        let d2 = design2_weights(p, &history, &params, 1.0).unwrap().feature_weights.unwrap();
        for k in 0..8 {
            let col: f64 = (0..len).map(|j| d2[(j, k)]).sum();
            prop_assert!((col - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn split_is_a_partition(edges in prop::collection::vec((0usize..30, 0usize..40), 1..300), seed in any::<u64>()) {
        let ds = dataset_from(&edges, 30, 40);
        let split = split_per_user(&ds, [0.7, 0.1, 0.2], seed).unwrap();
        for (u, full) in ds.positives.iter().enumerate() {
            let mut union: Vec<usize> = split.train[u].iter().chain(&split.validation[u]).chain(&split.test[u]).copied().collect();
            union.sort();
            prop_assert_eq!(&union, full);
            prop_assert!(!split.train[u].is_empty());
        }
        prop_assert_eq!(split_per_user(&ds, [0.7, 0.1, 0.2], seed).unwrap(), split);
    }

    #[test]
    fn k_core_degrees_and_fixed_point(edges in prop::collection::vec((0usize..25, 0usize..25), 1..400), k in 1usize..5) {
        let ds = dataset_from(&edges, 25, 25);
        match k_core_filter(&ds, k, k) {
            Ok(core) => {
                prop_assert!(core.positives.iter().all(|l| l.len() >= k));
                prop_assert!(core.item_degrees().iter().all(|&d| d >= k));
                prop_assert_eq!(k_core_filter(&core, k, k).unwrap(), core);
            }
            Err(_) => {
                // Empty fixed point: no subgraph with all degrees ≥ k survives pruning.
                prop_assert!(k > 1);
            }
        }
    }

    #[test]
    fn metric_bounds(ranked in prop::collection::vec(0usize..60, 0..15), test in prop::collection::vec(0usize..60, 1..10), n in 1usize..15) {
        let mut ranked = ranked;
        ranked.sort();
        ranked.dedup();
        ranked.truncate(n);
        let mut test = test;
        test.sort();
        test.dedup();
        let hr = hr_at_n(&ranked, &test);
        let ndcg = ndcg_at_n(&ranked, &test, n);
        prop_assert!((0.0..=1.0).contains(&hr));
        prop_assert!((0.0..=1.0 + 1e-12).contains(&ndcg));
        prop_assert!(ndcg <= hr);
        prop_assert_eq!(ndcg > 0.0, hr == 1.0);
        let m = n.min(test.len());
        let perfect = ranked.len() >= m && ranked[..m].iter().all(|i| test.contains(i));
        prop_assert_eq!((ndcg - 1.0).abs() < 1e-12, perfect);
    }

    #[test]
    fn negatives_avoid_positives(positives in prop::collection::btree_set(0usize..80, 1..70), ratio in 1usize..6, seed in any::<u64>()) {
        let positives: Vec<usize> = positives.into_iter().collect();
        let mut r = rng(seed);
        let negs = sample_negatives(&positives, ratio, 80, &mut r).unwrap();
        prop_assert_eq!(negs.len(), ratio * positives.len());
        prop_assert!(negs.iter().all(|n| *n < 80 && positives.binary_search(n).is_err()));
    }

    #[test]
    fn accumulators_never_decrease(seed in any::<u64>(), cfg_idx in 0usize..8) {
        let cfg = all_configs(4).swap_remove(cfg_idx);
        let mut r = rng(seed);
        let mut params = random_params(&cfg, 8, 2, 0.5, &mut r);
        let mut state = OptimizerState::new(&cfg, 8, 2);
        for step in 0..10 {
            let items = distinct_items(8, 4, &mut r);
            let ctx = PredictionContext::new(step % 2, items[0], items[1..].to_vec()).unwrap();
            let fwd = forward(&ctx, &params, &cfg).unwrap();
            let grads = backward(&fwd, &ctx, &params, &cfg, if step % 3 == 0 { 0.4 } else { -0.7 }, 1e-3);
            let before: Vec<f64> = state.accumulators.arrays().into_iter().flat_map(|(_, a)| a.to_vec()).collect();
            adagrad_step(&mut params, &grads, &mut state, 0.05, 1e-8);
            let after: Vec<f64> = state.accumulators.arrays().into_iter().flat_map(|(_, a)| a.to_vec()).collect();
            prop_assert!(before.iter().zip(&after).all(|(b, a)| a >= b));
            prop_assert!(params.all_finite());
        }
    }

    #[test]
    fn regularization_alone_shrinks_magnitudes(seed in any::<u64>(), cfg_idx in 0usize..8) {
        let cfg = all_configs(4).swap_remove(cfg_idx);
        let mut r = rng(seed);
        let mut params = random_params(&cfg, 8, 2, 0.5, &mut r);
        let mut state = OptimizerState::new(&cfg, 8, 2);
        let ctx = PredictionContext::new(1, 0, vec![1, 2, 3]).unwrap();
        let fwd = forward(&ctx, &params, &cfg).unwrap();
        // Zero data gradient; only 2λθ remains.
        let grads = backward(&fwd, &ctx, &params, &cfg, 0.0, 0.1);
        let before = params.clone();
        // Adagrad's first step has magnitude ≈ lr, so |θ| must exceed lr/2
        // for the step not to overshoot zero.
        let lr = 1e-4;
        adagrad_step(&mut params, &grads, &mut state, lr, 1e-12);
        for ((name, old), (_, new)) in before.arrays().into_iter().zip(params.arrays()) {
            for (o, n) in old.iter().zip(new) {
                if o != n && o.abs() > lr {
                    prop_assert!(n.abs() < o.abs(), "{} {} -> {}", name, o, n);
                }
            }
        }
        let touched = before.arrays().into_iter().zip(params.arrays())
            .map(|((_, o), (_, n))| o.iter().zip(n).filter(|(a, b)| a != b && a.abs() > lr).count())
            .sum::<usize>();
        prop_assert!(touched > 0);
    }
}

#[test]
fn untouched_items_get_no_gradient() {
    let mut r = rng(5);
    for cfg in all_configs(4) {
        let params = random_params(&cfg, 10, 2, 0.5, &mut r);
        let ctx = PredictionContext::new(0, 2, vec![4, 7]).unwrap();
        let fwd = forward(&ctx, &params, &cfg).unwrap();
        let dense = backward(&fwd, &ctx, &params, &cfg, 0.3, 0.0).to_dense(&params);
        let (_, p_grad) = dense.iter().find(|(n, _)| n == "P").unwrap();
        let (_, q_grad) = dense.iter().find(|(n, _)| n == "Q").unwrap();
        for item in [0, 1, 3, 5, 6, 8, 9] {
            assert!(p_grad[item * 4..item * 4 + 4].iter().all(|g| *g == 0.0));
            if item != 2 {
                assert!(q_grad[item * 4..item * 4 + 4].iter().all(|g| *g == 0.0));
            }
        }
    }
}

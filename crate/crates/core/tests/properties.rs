mod common;

use common::*;
use gzsl_ensemble::calibration::{calibrate_grid, hmean, GridSpec};
use gzsl_ensemble::ensemble::{argmax, ensemble_scores, ClassPartition, ClassWeighting, PartitionBest};
use gzsl_ensemble::linear::LinearMap;
use gzsl_ensemble::metrics::{compute_ausuc, evaluate_gzsl, sweep_beta};
use gzsl_ensemble::semantic::DapRegressor;
use gzsl_ensemble::visual::VisualClassifier;
use ndarray::{Array1, Array2};
use proptest::prelude::*;

fn distribution(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.001f64..1.0, n).prop_map(|v| {
        let t: f64 = v.iter().sum();
        v.into_iter().map(|x| x / t).collect()
    })
}

fn distribution_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..8).prop_flat_map(|n| (distribution(n), distribution(n)))
}

fn map_strategy(inputs: usize, outputs: usize) -> impl Strategy<Value = LinearMap> {
    (
        prop::collection::vec(-2.0f64..2.0, inputs * outputs),
        prop::collection::vec(-1.0f64..1.0, outputs),
    )
        .prop_map(move |(w, b)| LinearMap {
            weights: Array2::from_shape_vec((inputs, outputs), w).unwrap(),
            bias: Array1::from(b),
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn vote_fractions_are_multiples_of_one_over_t(
        map in map_strategy(4, 3),
        protos in prop::collection::vec(-1.0f64..1.0, 5 * 3),
        x in prop::collection::vec(-1.0f64..1.0, 4),
        t in 1usize..40,
        rate in 0.0f64..0.9,
        seed in any::<u64>(),
        sample in any::<u64>(),
    ) {
        let attrs = Array2::from_shape_vec((5, 3), protos).unwrap();
        let model = DapRegressor::new(map, rate, t, seed).unwrap();
        let p = model.mc_scores(Array1::from(x).view(), attrs.view(), sample);
        let total: f64 = p.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        for v in p.iter() {
            let k = v * t as f64;
            prop_assert!((k - k.round()).abs() < 1e-9, "{} is not a multiple of 1/{}", v, t);
        }
    }

    #[test]
    fn averaged_softmaxes_are_positive_distributions(
        map in map_strategy(4, 5),
        x in prop::collection::vec(-1.0f64..1.0, 4),
        t in 1usize..30,
        rate in 0.0f64..0.9,
        seed in any::<u64>(),
    ) {
        let model = VisualClassifier::new(map, rate, t, seed).unwrap();
        let p = model.mc_scores(Array1::from(x).view(), 0);
        prop_assert!(p.iter().all(|&v| v > 0.0));
        prop_assert!((p.sum() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn fusion_matches_elementwise_reference((d, c) in distribution_pair(), alpha in 0.0f64..=1.0) {
        let fused = ensemble_scores(&d, &c, alpha).unwrap();
        let reference = reference_fuse(&d, &c, alpha);
        for (a, b) in fused.iter().zip(&reference) {
            prop_assert!((a - b).abs() <= 1e-15);
        }
    }

    #[test]
    fn agreement_keeps_the_agreed_class((d, c) in distribution_pair(), alpha in 0.0f64..=1.0) {
        let fused = ensemble_scores(&d, &c, alpha).unwrap();
        let (a, b) = (argmax(&d).unwrap(), argmax(&c).unwrap());
        if a == b {
            prop_assert_eq!(fused[a], 1.0);
            prop_assert_eq!(argmax(&fused), Some(a));
        } else {
            let full_cyg = ensemble_scores(&d, &c, 1.0).unwrap();
            prop_assert_eq!(full_cyg, c.clone());
            let full_dap = ensemble_scores(&d, &c, 0.0).unwrap();
            prop_assert_eq!(full_dap, d.clone());
        }
    }

    #[test]
    fn partition_best_equals_weighted_argmax(
        scores in prop::collection::vec(0.0f64..1.0, 2..10),
        split in any::<prop::sample::Index>(),
        beta in prop_oneof![Just(0.0), Just(1.0), 0.0f64..=1.0],
    ) {
        let c = scores.len();
        let seen = 1 + split.index(c - 1);
        let part = ClassPartition::contiguous(seen, c);
        let unseen: Vec<bool> = (0..c).map(|j| j >= seen).collect();
        let best = PartitionBest::new(&scores, &part).pick(beta);
        prop_assert_eq!(best, reference_predict(&scores, &unseen, beta));
        let w = ClassWeighting::new(beta, part).unwrap();
        prop_assert_eq!(w.predict(&scores).unwrap(), best);
    }

    #[test]
    fn predictions_move_from_seen_to_unseen_at_most_once(
        scores in prop::collection::vec(0.0f64..1.0, 2..10),
        split in any::<prop::sample::Index>(),
    ) {
        let c = scores.len();
        let seen = 1 + split.index(c - 1);
        let best = PartitionBest::new(&scores, &ClassPartition::contiguous(seen, c));
        let picks: Vec<usize> = (0..=100).map(|i| best.pick(i as f64 / 100.0)).collect();
        prop_assert!(picks[0] < seen);
        prop_assert!(picks[100] >= seen);
        let changes = picks.windows(2).filter(|w| w[0] != w[1]).count();
        prop_assert!(changes <= 1);
    }

    #[test]
    fn ausuc_matches_brute_force_and_ignores_dominated_points(
        points in prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 1..30),
        shrink in 0.0f64..1.0,
        pick in any::<prop::sample::Index>(),
    ) {
        let a = compute_ausuc(&points).unwrap();
        prop_assert!((a - reference_ausuc(&points)).abs() < 1e-9);
        prop_assert!((0.0..=1.0).contains(&a));
        // A point strictly below and left of an existing one is irrelevant.
        let q = points[pick.index(points.len())];
        if q.0 > 0.0 && q.1 > 0.0 {
            let mut more = points.clone();
            more.push((q.0 * shrink, q.1 * shrink));
            prop_assert!((compute_ausuc(&more).unwrap() - a).abs() < 1e-12);
        }
    }

    #[test]
    fn hmean_is_symmetric_and_between_its_inputs(s in 0.0f64..=1.0, u in 0.0f64..=1.0) {
        let h = hmean(s, u);
        prop_assert_eq!(h, hmean(u, s));
        prop_assert!(h >= 0.0 && h <= s.max(u) + 1e-15);
        prop_assert!(h >= s.min(u) - 1e-15);
        prop_assert!((h - reference_hmean(s, u)).abs() < 1e-15);
    }

    #[test]
    fn evaluation_matches_reference(seed in any::<u64>(), alpha in 0.0f64..=1.0, beta in 0.0f64..=1.0) {
        let mut r = rng(seed);
        let set = random_score_set(&mut r, 3, 2, 3);
        let report = evaluate_gzsl(&set, alpha, beta).unwrap();
        let (s, u) = reference_accuracies(&set, alpha, beta);
        prop_assert!((report.acc_seen - s).abs() < 1e-12);
        prop_assert!((report.acc_unseen - u).abs() < 1e-12);
        prop_assert!((report.hmean - reference_hmean(s, u)).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn calibration_matches_exhaustive_search(seed in any::<u64>()) {
        let mut r = rng(seed);
        let set = random_score_set(&mut r, 4, 3, 4);
        let grid = GridSpec::uniform(0.1, 0.05).unwrap();
        let result = calibrate_grid(&set, &grid).unwrap();
        let (a, b, h) = reference_calibration(&set, grid.alpha_values(), grid.beta_values());
        prop_assert_eq!((result.alpha_star, result.beta_star), (a, b));
        prop_assert!((result.best.hmean - h).abs() < 1e-12);
    }

    #[test]
    fn sweeps_trade_seen_for_unseen_accuracy(seed in any::<u64>(), alpha in 0.0f64..=1.0) {
        let mut r = rng(seed);
        let set = random_score_set(&mut r, 4, 3, 5);
        let betas: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        let curve = sweep_beta(&set, alpha, &betas).unwrap();
        prop_assert_eq!(curve.points.len(), 101);
        prop_assert_eq!(curve.points[0].acc_unseen, 0.0);
        prop_assert_eq!(curve.points[100].acc_seen, 0.0);
        for w in curve.points.windows(2) {
            prop_assert!(w[1].acc_unseen >= w[0].acc_unseen);
            prop_assert!(w[1].acc_seen <= w[0].acc_seen);
        }
    }
}

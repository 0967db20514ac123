use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use xmtr::dataset::{kfold, load_csv, Dataset, MissingPolicy};
use xmtr::evaluation::{coverage, make_synthetic, rule_precision, run_experiment};
use xmtr::forest::Forest;
use xmtr::pathminer::{extract_paths, mine, rank_features, RankOrder};
use xmtr::reducer::{check_conclusive, envelope, reduce, ReduceOptions};
use xmtr::{explain, fit, AllowedError, ExplainOptions, ForestConfig, MaxFeatures};

fn small_forest(seed: u64, n: usize, d: usize, m: usize, trees: usize, depth: Option<usize>) -> (Dataset, Forest) {
    let data = make_synthetic(n, d, m, 0.2, seed).unwrap();
    let config = ForestConfig {
        n_estimators: trees,
        max_depth: depth,
        seed,
        ..ForestConfig::default()
    };
    let forest = fit(&data, &config).unwrap();
    (data, forest)
}

fn budget(m: usize, seed: u64, per_target: bool) -> AllowedError {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if per_target {
        AllowedError::PerTarget((0..m).map(|_| rng.random_range(0.0..1.0)).collect())
    } else {
        AllowedError::Global(rng.random_range(0.0..1.0))
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn kfold_partitions_rows(n in 2usize..200, k in 2usize..12, seed in any::<u64>()) {
        prop_assume!(k <= n);
        let plan = kfold(n, k, seed).unwrap();
        let mut seen = vec![0; n];
        for fold in 0..k {
            for r in plan.test_rows(fold) {
                seen[r] += 1;
            }
            prop_assert_eq!(plan.test_rows(fold).len() + plan.train_rows(fold).len(), n);
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        let sizes = plan.fold_sizes();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn csv_round_trip(seed in any::<u64>(), n in 1usize..30, d in 1usize..5, m in 1usize..4) {
        let data = make_synthetic(n, d, m, 0.5, seed).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        data.write_csv(&path).unwrap();
        let back = load_csv(&path, data.target_names(), MissingPolicy::Error).unwrap();
        prop_assert_eq!(back, data);
    }

    #[test]
    fn predictions_stay_within_training_targets(seed in any::<u64>(), n in 5usize..60, depth in proptest::option::of(1usize..6)) {
        let (data, forest) = small_forest(seed, n, 3, 2, 7, depth);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..20 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-4.0..4.0)).collect();
            let p = forest.predict(&x).unwrap();
            for t in 0..2 {
                let lo = (0..n).map(|r| data.target(r, t)).fold(f64::INFINITY, f64::min);
                let hi = (0..n).map(|r| data.target(r, t)).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(p[t] >= lo - 1e-9 && p[t] <= hi + 1e-9);
                for tree in forest.trees() {
                    let v = tree.predict(&x).unwrap()[t];
                    prop_assert!(tree.leaf_min()[t] <= v && v <= tree.leaf_max()[t]);
                }
            }
        }
    }

    #[test]
    fn unrestricted_trees_fit_training_data(seed in any::<u64>(), n in 2usize..60) {
        let data = make_synthetic(n, 3, 2, 0.3, seed).unwrap();
        let config = ForestConfig {
            n_estimators: 3,
            bootstrap: false,
            max_features: MaxFeatures::All,
            seed,
            ..ForestConfig::default()
        };
        let forest = fit(&data, &config).unwrap();
        let (_, mae) = forest.evaluate_mae(&data).unwrap();
        prop_assert!(mae < 1e-9, "training mae {}", mae);
    }

    #[test]
    fn paths_contain_instance(seed in any::<u64>(), depth in proptest::option::of(1usize..8)) {
        let (data, forest) = small_forest(seed, 50, 4, 2, 9, depth);
        let x = data.features((seed % 50) as usize).to_vec();
        let paths = extract_paths(&forest, &x).unwrap();
        prop_assert_eq!(paths.len(), forest.n_trees());
        for (i, p) in paths.iter().enumerate() {
            prop_assert_eq!(p.tree_index, i);
            prop_assert!(p.satisfied_by(&x));
            prop_assert_eq!(&p.leaf_prediction[..], forest.trees()[i].predict(&x).unwrap());
            for iv in p.conditions.values() {
                prop_assert!(iv.lower < iv.upper);
            }
        }
    }

    #[test]
    fn ranking_is_a_permutation(seed in any::<u64>(), min_support in 0.01f64..1.0, desc in any::<bool>()) {
        let (data, forest) = small_forest(seed, 40, 5, 1, 11, Some(3));
        let paths = extract_paths(&forest, data.features(0)).unwrap();
        let model = mine(&paths, min_support);
        let order = if desc { RankOrder::Descending } else { RankOrder::Ascending };
        let ranking = rank_features(&model, order);
        let mut sorted = ranking.clone();
        sorted.sort_unstable();
        let expected: Vec<usize> = paths.iter().flat_map(|p| p.features()).collect::<BTreeSet<_>>().into_iter().collect();
        prop_assert_eq!(sorted, expected);
        for w in ranking.windows(2) {
            let (a, b) = (model.feature_scores[&w[0]], model.feature_scores[&w[1]]);
            match order {
                RankOrder::Ascending => prop_assert!(a < b || (a == b && w[0] < w[1])),
                RankOrder::Descending => prop_assert!(a > b || (a == b && w[0] < w[1])),
            }
        }
    }

    #[test]
    fn reduction_is_a_ranking_prefix_and_pins_kept_trees(seed in any::<u64>(), per_target in any::<bool>()) {
        let (data, forest) = small_forest(seed, 60, 5, 2, 25, Some(3));
        let x = data.features((seed % 60) as usize).to_vec();
        let allowed = budget(2, seed, per_target);
        let e = explain(&forest, &x, &allowed, &ExplainOptions::default()).unwrap();
        let r = &e.reduction;
        prop_assert!(!r.kept.is_empty());
        let prefix: BTreeSet<usize> = r.ranking.iter().take(r.feature_set.len()).copied().collect();
        prop_assert_eq!(&prefix, &r.feature_set);
        for p in &e.paths {
            prop_assert_eq!(r.kept.contains(&p.tree_index), p.is_covered_by(&r.feature_set));
        }
        prop_assert!(allowed.accepts(&r.local_errors));
        prop_assert!(e.rule.covers(&x));
        let report = check_conclusive(&e.rule, r, &forest, &x, 200, seed).unwrap();
        prop_assert_eq!(report.kept_leaf_changes, 0);
        prop_assert_eq!(report.envelope_violations, 0);
        let env = envelope(r, &e.paths, &forest);
        for (t, (lo, hi)) in env.iter().enumerate() {
            prop_assert!(*lo <= r.original_prediction[t] + 1e-12 && r.original_prediction[t] <= *hi + 1e-12);
        }
    }

    #[test]
    fn larger_budget_never_keeps_more(seed in any::<u64>(), a in 0.0f64..1.0, extra in 0.0f64..1.0) {
        let (data, forest) = small_forest(seed, 60, 5, 2, 25, Some(3));
        let x = data.features((seed % 60) as usize).to_vec();
        let paths = extract_paths(&forest, &x).unwrap();
        let assoc = mine(&paths, 0.1);
        let options = ReduceOptions::default();
        let ra = reduce(&paths, &assoc, &AllowedError::Global(a), &forest, &options).unwrap();
        let rb = reduce(&paths, &assoc, &AllowedError::Global(a + extra), &forest, &options).unwrap();
        prop_assert!(ra.kept.len() >= rb.kept.len());
        prop_assert!(ra.feature_set.is_superset(&rb.feature_set));
    }

    #[test]
    fn precision_ignores_row_order(seed in any::<u64>()) {
        let (data, forest) = small_forest(seed, 40, 3, 2, 9, Some(2));
        let x = data.features(0).to_vec();
        let e = explain(&forest, &x, &AllowedError::Global(0.5), &ExplainOptions::default()).unwrap();
        let mut rows: Vec<usize> = (0..data.n_rows()).collect();
        rows.reverse();
        rows.rotate_left((seed % 40) as usize);
        let shuffled = data.subset(&rows).unwrap();
        let (a, b) = (
            rule_precision(&e.rule, &data, &forest).unwrap(),
            rule_precision(&e.rule, &shuffled, &forest).unwrap(),
        );
        prop_assert!(a.is_some());
        prop_assert!((a.unwrap() - b.unwrap()).abs() < 1e-12);
        prop_assert!(coverage(&e.rule, &data) >= 1.0 / data.n_rows() as f64);
    }
}

#[test]
fn experiment_tests_every_row_once() {
    let data = make_synthetic(37, 3, 2, 0.1, 5).unwrap();
    let config = ForestConfig {
        n_estimators: 10,
        seed: 5,
        ..ForestConfig::default()
    };
    let report = run_experiment(&data, &config, &[AllowedError::Global(0.2)], 5, 5, &ExplainOptions::default()).unwrap();
    assert!(report.test_counts.iter().all(|&c| c == 1));
    assert_eq!(report.rows[0].instances, 37);
}

use super::*;
use crate::network::{ArchVariant, TrainConfig};

#[test]
fn folds_partition_chronologically() {
    let folds = chronological_folds(100, 5).unwrap();
    assert_eq!(
        folds,
        vec![0..20, 20..40, 40..60, 60..80, 80..100]
    );

    // Remainder lands on the earliest folds.
    let folds = chronological_folds(103, 5).unwrap();
    let sizes: Vec<usize> = folds.iter().map(|r| r.len()).collect();
    assert_eq!(sizes, vec![21, 21, 21, 20, 20]);

    // Disjoint cover of 0..n.
    let mut seen = vec![false; 103];
    for r in &folds {
        for i in r.clone() {
            assert!(!seen[i]);
            seen[i] = true;
        }
    }
    assert!(seen.into_iter().all(|b| b));
}

#[test]
fn fold_preconditions() {
    assert!(matches!(chronological_folds(10, 1), Err(EvalError::BadK(1))));
    assert!(matches!(
        chronological_folds(3, 5),
        Err(EvalError::TooSmall { .. })
    ));
}

/// Brute-force rank oracle: each observation's rank is computed by counting,
/// independently of the sort-based implementation.
fn kruskal_wallis_brute(groups: &[Vec<f64>]) -> (f64, f64) {
    let all: Vec<f64> = groups.iter().flatten().copied().collect();
    let n = all.len() as f64;
    let rank_of = |x: f64| -> f64 {
        let below = all.iter().filter(|&&v| v < x).count() as f64;
        let equal = all.iter().filter(|&&v| v == x).count() as f64;
        below + (equal + 1.0) / 2.0
    };
    let mut h = 0.0;
    for g in groups {
        let rs: f64 = g.iter().map(|&x| rank_of(x)).sum();
        h += rs * rs / g.len() as f64;
    }
    h = 12.0 / (n * (n + 1.0)) * h - 3.0 * (n + 1.0);

    let mut tie_term = 0.0;
    let mut sorted = all.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    let correction = 1.0 - tie_term / (n * n * n - n);
    if correction <= 0.0 {
        return (0.0, 1.0);
    }
    ((h / correction), f64::NAN) // p cross-checked separately
}

#[test]
fn kruskal_wallis_matches_brute_force_on_random_instances() {
    let mut state = 0xabcdef01u64;
    let mut rand = move || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        state
    };
    for case in 0..100 {
        // Up to 4 groups of 1..=3 observations: at most 12 in total.
        let n_groups = 2 + (rand() % 3) as usize;
        let mut groups = Vec::new();
        for _ in 0..n_groups {
            let size = 1 + (rand() % 3) as usize;
            // Small integer values force plenty of ties.
            groups.push((0..size).map(|_| (rand() % 6) as f64).collect::<Vec<f64>>());
        }
        let (h, _) = kruskal_wallis(&groups).unwrap();
        let (h_brute, _) = kruskal_wallis_brute(&groups);
        assert!(
            (h - h_brute).abs() < 1e-9,
            "case {case}: H {h} vs brute {h_brute} on {groups:?}"
        );
    }
}

fn toy_arch() -> Architecture {
    let mut arch = Architecture::new(ArchVariant::SmallNet);
    arch.input_shape = (4, 5, 5);
    arch.conv_maps = 8;
    arch.fc_width = 16;
    arch
}

fn toy_dataset(n: usize, task_names: &[&str], separable: bool) -> Dataset {
    let n_classes = task_names.len();
    let dim = 4 * 5 * 5;
    let mut ds = Dataset::new(task_names.iter().map(|s| s.to_string()).collect());
    let mut state = 77u64;
    for i in 0..n {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        let label = (i % n_classes) as u8;
        let mut values = vec![0.2f32; dim];
        for (j, v) in values.iter_mut().enumerate() {
            *v += ((state >> (j % 50)) & 0xff) as f32 / 2550.0;
        }
        if separable {
            let block = (label as usize % 4) * 25;
            for v in values[block..block + 25].iter_mut() {
                *v += 2.5 + 0.5 * ((label as usize) / 4) as f32;
            }
        }
        ds.examples.push(Example {
            values,
            label,
            timestamp_s: i as f64 * 0.3,
            origin: ExampleOrigin::Video,
        });
    }
    ds
}

fn fast_config() -> TrainConfig {
    TrainConfig {
        max_epochs: 30,
        batch_size: 16,
        patience: 6,
        learning_rate: 0.02,
        shuffle_seed: 42,
        ..TrainConfig::default()
    }
}

#[test]
fn cross_validation_separable_vs_shuffled() {
    let names = ["a", "b", "c", "d"];
    let arch = toy_arch();
    let config = fast_config();

    let dataset = toy_dataset(200, &names, true);
    let cv = cross_validate(&dataset, &arch, &config, 5, 5).unwrap();
    assert_eq!(cv.fold_accuracies.len(), 5);
    assert!(cv.fold_accuracies.iter().all(|row| row.len() == 5));
    assert!(cv.mean >= 0.9, "separable mean {}", cv.mean);
    assert!(cv.warnings.is_empty());

    let shuffled = dataset.label_shuffled(7);
    let cv_shuffled = cross_validate(&shuffled, &arch, &config, 5, 5).unwrap();
    assert!(
        (cv_shuffled.mean - 0.25).abs() <= 0.05,
        "chance-floor mean {}",
        cv_shuffled.mean
    );
}

#[test]
fn cross_validation_is_deterministic() {
    let dataset = toy_dataset(120, &["a", "b", "c", "d"], true);
    let arch = toy_arch();
    let config = fast_config();
    let a = cross_validate(&dataset, &arch, &config, 4, 2).unwrap();
    let b = cross_validate(&dataset, &arch, &config, 4, 2).unwrap();
    assert_eq!(a.fold_accuracies, b.fold_accuracies);
}

#[test]
fn missing_class_in_fold_is_a_warning_not_an_error() {
    // Sorted labels: early folds see only class 0.
    let mut dataset = toy_dataset(80, &["a", "b", "c", "d"], true);
    dataset.examples.sort_by_key(|e| e.label);
    for (i, e) in dataset.examples.iter_mut().enumerate() {
        e.timestamp_s = i as f64;
    }
    let cv = cross_validate(&dataset, &toy_arch(), &fast_config(), 4, 1).unwrap();
    assert!(!cv.warnings.is_empty());
}

#[test]
fn mean_and_std_are_consistent_with_matrix() {
    let dataset = toy_dataset(100, &["a", "b", "c", "d"], true);
    let cv = cross_validate(&dataset, &toy_arch(), &fast_config(), 5, 2).unwrap();
    let flat = cv.samples();
    let mean = flat.iter().sum::<f64>() / flat.len() as f64;
    assert!((cv.mean - mean).abs() < 1e-12);
    assert!(flat.iter().all(|a| (0.0..=1.0).contains(a)));
}

#[test]
fn restriction_remaps_labels_in_order() {
    let ds = toy_dataset(40, &["a", "b", "c", "d", "e", "f", "g", "h"], false);
    let sub = ds.restricted_to(&[1, 4, 6, 7]);
    assert_eq!(sub.task_names, vec!["b", "e", "g", "h"]);
    assert!(sub.examples.iter().all(|e| e.label < 4));
    assert_eq!(sub.len(), ds.count_label(1) + ds.count_label(4) + ds.count_label(6) + ds.count_label(7));
}

#[test]
fn ranking_emits_70_sorted_rows() {
    let names = ["t0", "t1", "t2", "t3", "t4", "t5", "t6", "t7"];
    let pool = toy_dataset(240, &names, true);
    let arch = toy_arch();
    let config = TrainConfig {
        max_epochs: 2,
        batch_size: 16,
        patience: 0,
        shuffle_seed: 11,
        ..TrainConfig::default()
    };
    let ranking = rank_combinations(&pool, &arch, &config, 3, 2, 0.01).unwrap();
    assert_eq!(ranking.rows.len(), 70);
    assert_eq!(ranking.bonferroni_divisor, 70 * 69 / 2);
    for w in ranking.rows.windows(2) {
        assert!(
            w[0].mean_ta > w[1].mean_ta
                || (w[0].mean_ta == w[1].mean_ta
                    && w[0].tasks.join(",") <= w[1].tasks.join(",")),
            "rows out of order"
        );
    }
    for row in &ranking.rows {
        assert_eq!(row.tasks.len(), 4);
        assert_eq!(row.samples.len(), 3 * 2);
        assert!(row.n_sig_diff <= 69);
    }

    // Determinism.
    let again = rank_combinations(&pool, &arch, &config, 3, 2, 0.01).unwrap();
    for (a, b) in ranking.rows.iter().zip(&again.rows) {
        assert_eq!(a.tasks, b.tasks);
        assert_eq!(a.mean_ta, b.mean_ta);
        assert_eq!(a.n_sig_diff, b.n_sig_diff);
    }
}

#[test]
fn ranking_preconditions() {
    let pool = toy_dataset(10, &["a", "b", "c"], false);
    assert!(matches!(
        rank_combinations(&pool, &toy_arch(), &fast_config(), 2, 1, 0.01),
        Err(EvalError::TooFewTasks(3))
    ));

    let mut pool = toy_dataset(40, &["a", "b", "c", "d", "e", "f", "g", "h"], false);
    pool.examples.retain(|e| e.label != 3);
    assert!(matches!(
        rank_combinations(&pool, &toy_arch(), &fast_config(), 2, 1, 0.01),
        Err(EvalError::MissingTask(_))
    ));
}

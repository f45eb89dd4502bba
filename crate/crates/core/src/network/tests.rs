use super::*;
use crate::features::FeatureTensor;
use ndarray::Array3;

fn tensor_from_seed(seed: u64, shape: (usize, usize, usize)) -> FeatureTensor {
    let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15) | 1;
    let values = Array3::from_shape_fn(shape, |_| {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64 * 10.0
    });
    FeatureTensor {
        values,
        origin_time_s: 0.0,
    }
}

#[test]
fn init_is_uniform_in_range_and_seeded() {
    let arch = Architecture::small_net();
    let params = init(&arch, 7);
    assert_eq!(params.len(), arch.param_count());
    assert!(params.flat().iter().all(|&v| (-1.0..=1.0).contains(&v)));

    let again = init(&arch, 7);
    assert_eq!(params.flat(), again.flat());

    let other = init(&arch, 8);
    let differing = params
        .flat()
        .iter()
        .zip(other.flat())
        .filter(|(a, b)| a != b)
        .count();
    assert!(differing as f64 / params.len() as f64 > 0.99);
}

#[test]
fn parameter_counts_match_analytic_formulas() {
    let input = 129usize;
    let (h, w) = (7usize, 11usize);

    let small = Architecture::new(ArchVariant::SmallNet);
    let conv = 32 * input * 9 + 32;
    let flat = 32 * (h - 2) * (w - 2);
    let expect = conv + (128 * flat + 128) + (4 * 128 + 4);
    assert_eq!(small.param_count(), expect);

    let plus_cl = Architecture::new(ArchVariant::SmallNetPlus1Cl);
    let conv2 = 32 * 32 * 9 + 32;
    let flat2 = 32 * (h - 4) * (w - 4);
    let expect_cl = conv + conv2 + (128 * flat2 + 128) + (4 * 128 + 4);
    assert_eq!(plus_cl.param_count(), expect_cl);

    let plus_fc = Architecture::new(ArchVariant::SmallNetPlus1Fc);
    let expect_fc = expect + 128 * 128 + 128;
    assert_eq!(plus_fc.param_count(), expect_fc);

    let three_d = Architecture::new(ArchVariant::SmallNet3d);
    let conv3 = 16 * (5 * 3 * 3) + 16;
    let flat3 = 16 * (input - 4) * (h - 2) * (w - 2);
    let expect_3d = conv3 + (128 * flat3 + 128) + (4 * 128 + 4);
    assert_eq!(three_d.param_count(), expect_3d);
}

#[test]
fn flat_round_trip_is_identity() {
    let arch = Architecture::small_net();
    let params = init(&arch, 3);
    let rebuilt = ModelParams::from_flat(arch.clone(), params.flat().to_vec(), 3).unwrap();
    assert_eq!(params.flat(), rebuilt.flat());
    assert!(ModelParams::from_flat(arch, vec![0.0; 5], 0).is_err());
}

#[test]
fn probabilities_normalize_and_zero_params_are_uniform() {
    let arch = Architecture::small_net();
    let tensor = tensor_from_seed(5, arch.input_shape);

    let params = init(&arch, 11);
    let pred = forward(&params, &tensor).unwrap();
    assert!((pred.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    assert!(pred.probabilities.iter().all(|&p| p >= 0.0));

    let zero = ModelParams::from_flat(arch.clone(), vec![0.0; arch.param_count()], 0).unwrap();
    let uniform = forward(&zero, &tensor).unwrap();
    for p in &uniform.probabilities {
        assert!((p - 0.25).abs() < 1e-12);
    }
    assert_eq!(uniform.label, 0, "tie-break must pick the lowest index");
}

#[test]
fn forward_is_deterministic() {
    let arch = Architecture::new(ArchVariant::SmallNetPlus1Cl);
    let params = init(&arch, 13);
    let tensor = tensor_from_seed(9, arch.input_shape);
    let a = forward(&params, &tensor).unwrap();
    let b = forward(&params, &tensor).unwrap();
    assert_eq!(a.probabilities, b.probabilities);
}

#[test]
fn shape_mismatch_is_an_error() {
    let arch = Architecture::small_net();
    let params = init(&arch, 1);
    let tensor = tensor_from_seed(1, (10, 7, 11));
    assert!(matches!(
        forward(&params, &tensor),
        Err(NetworkError::ShapeMismatch { .. })
    ));
}

/// Tiny architecture for fast training-behavior tests.
fn toy_arch() -> Architecture {
    let mut arch = Architecture::small_net();
    arch.input_shape = (4, 5, 5);
    arch.conv_maps = 4;
    arch.fc_width = 8;
    arch
}

fn biased_output_params(arch: &Architecture, probs: [f64; 4]) -> ModelParams {
    let mut flat = vec![0.0; arch.param_count()];
    let n = flat.len();
    for (i, p) in probs.iter().enumerate() {
        flat[n - 4 + i] = p.ln();
    }
    ModelParams::from_flat(arch.clone(), flat, 0).unwrap()
}

#[test]
fn argmax_and_loss_fixtures() {
    let arch = toy_arch();
    let tensor = tensor_from_seed(2, arch.input_shape);

    // Zero weights + log-prob biases produce exactly those probabilities.
    let params = biased_output_params(&arch, [0.1, 0.6, 0.2, 0.1]);
    let pred = forward(&params, &tensor).unwrap();
    assert_eq!(pred.label, 1);
    for (p, want) in pred.probabilities.iter().zip([0.1, 0.6, 0.2, 0.1]) {
        assert!((p - want).abs() < 1e-12);
    }

    // Uniform predictions: loss = ln 4.
    let zero = ModelParams::from_flat(arch.clone(), vec![0.0; arch.param_count()], 0).unwrap();
    let (loss, _) = loss_and_gradients(&zero, &[(&tensor, 2)]).unwrap();
    assert!((loss - 4.0f64.ln()).abs() < 1e-12);

    // Near-certain correct prediction: loss below 1e-3.
    let confident = biased_output_params(&arch, [1e-6, 1.0, 1e-6, 1e-6]);
    let (loss, _) = loss_and_gradients(&confident, &[(&tensor, 1)]).unwrap();
    assert!(loss < 1e-3, "loss {loss}");
}

#[test]
fn bad_label_is_an_error() {
    let arch = toy_arch();
    let params = init(&arch, 1);
    let tensor = tensor_from_seed(3, arch.input_shape);
    assert!(matches!(
        loss_and_gradients(&params, &[(&tensor, 7)]),
        Err(NetworkError::BadLabel(7, 4))
    ));
    assert!(matches!(
        loss_and_gradients(&params, &[]),
        Err(NetworkError::EmptyBatch)
    ));
}

#[test]
fn softmax_is_shift_invariant() {
    let arch = toy_arch();
    let tensor = tensor_from_seed(4, arch.input_shape);
    let params = init(&arch, 5);
    let base = forward(&params, &tensor).unwrap();

    // Shifting every output bias by a constant shifts all logits equally.
    let mut shifted = params.clone();
    let n = shifted.len();
    for slot in shifted.flat_mut()[n - 4..].iter_mut() {
        *slot += 123.456;
    }
    let moved = forward(&shifted, &tensor).unwrap();
    for (a, b) in base.probabilities.iter().zip(&moved.probabilities) {
        assert!((a - b).abs() < 1e-9);
    }
    assert_eq!(base.label, moved.label);
}

/// Central-difference gradient oracle on a sample of flat coordinates.
fn gradient_check(arch: &Architecture, coords: usize, tol: f64) {
    let mut params = init(arch, 17);
    // Pull the wide init toward the smooth softmax region; correctness must
    // hold at any parameter point, this one just keeps finite differences
    // well-conditioned.
    for v in params.flat_mut().iter_mut() {
        *v *= 0.05;
    }
    let t0 = tensor_from_seed(100, arch.input_shape);
    let t1 = tensor_from_seed(101, arch.input_shape);
    let batch = vec![(&t0, 1u8), (&t1, 3u8)];

    let (_, grads) = loss_and_gradients(&params, &batch).unwrap();

    let n = params.len();
    let step = 1e-4;
    let mut state = 0xfeed_beefu64;
    let mut max_rel: f64 = 0.0;
    for _ in 0..coords {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        let idx = (state >> 20) as usize % n;

        let orig = params.flat()[idx];
        params.flat_mut()[idx] = orig + step;
        let (loss_plus, _) = loss_and_gradients(&params, &batch).unwrap();
        params.flat_mut()[idx] = orig - step;
        let (loss_minus, _) = loss_and_gradients(&params, &batch).unwrap();
        params.flat_mut()[idx] = orig;

        let numeric = (loss_plus - loss_minus) / (2.0 * step);
        let analytic = grads[idx];
        let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-6);
        max_rel = max_rel.max(rel);
    }
    assert!(max_rel < tol, "{}: max relative error {max_rel}", arch.variant.name());
}

#[test]
fn gradients_match_finite_differences_2d() {
    gradient_check(&Architecture::new(ArchVariant::SmallNet), 60, 1e-4);
}

#[test]
fn gradients_match_finite_differences_3d() {
    let mut arch = Architecture::new(ArchVariant::SmallNet3d);
    // Shrink the frequency axis; the layer code is identical at any size.
    arch.input_shape = (16, 7, 11);
    arch.conv3d_maps = 4;
    arch.fc_width = 16;
    gradient_check(&arch, 60, 1e-4);
}

fn toy_items(n: usize, separable: bool) -> Vec<(Vec<f32>, u8)> {
    // Four clusters in feature space: class k lights up block k.
    let dim = 4 * 5 * 5;
    (0..n)
        .map(|i| {
            let label = (i % 4) as u8;
            let mut v = vec![0.1f32; dim];
            if separable {
                for j in 0..25 {
                    v[label as usize * 25 + j] = 1.0 + (i % 7) as f32 * 0.01;
                }
            } else {
                v[0] = (i % 13) as f32 * 0.1;
            }
            (v, label)
        })
        .collect()
}

#[test]
fn training_descends_on_separable_data() {
    let arch = toy_arch();
    let data = toy_items(40, true);
    let items: Vec<TrainItem> = data
        .iter()
        .map(|(v, l)| TrainItem { values: v, label: *l })
        .collect();
    let config = TrainConfig {
        max_epochs: 20,
        batch_size: 8,
        shuffle_seed: 5,
        ..TrainConfig::default()
    };
    let start = init(&arch, 2);
    let (_, history) = train(&start, &items, &config).unwrap();
    assert!(history.len() > 1);
    assert!(
        history.last().unwrap().train_loss < history[0].train_loss,
        "loss did not decrease: {} -> {}",
        history[0].train_loss,
        history.last().unwrap().train_loss
    );
}

#[test]
fn training_is_deterministic_given_seeds() {
    let arch = toy_arch();
    let data = toy_items(60, true);
    let items: Vec<TrainItem> = data
        .iter()
        .map(|(v, l)| TrainItem { values: v, label: *l })
        .collect();
    let config = TrainConfig {
        max_epochs: 6,
        batch_size: 16,
        shuffle_seed: 9,
        ..TrainConfig::default()
    };
    let start = init(&arch, 4);
    let (a, _) = train(&start, &items, &config).unwrap();
    let (b, _) = train(&start, &items, &config).unwrap();
    assert_eq!(a.flat(), b.flat());
}

#[test]
fn max_examples_keeps_only_the_most_recent() {
    let arch = toy_arch();
    // 500 contradictory early examples (same feature, label 0) followed by
    // 2000 consistent ones (label 1). With the cap the early ones never
    // reach the optimizer and the model commits fully to label 1.
    let dim = 4 * 5 * 5;
    let feature = vec![1.0f32; dim];
    let mut data = Vec::new();
    for _ in 0..500 {
        data.push((feature.clone(), 0u8));
    }
    for _ in 0..2000 {
        data.push((feature.clone(), 1u8));
    }
    let items: Vec<TrainItem> = data
        .iter()
        .map(|(v, l)| TrainItem { values: v, label: *l })
        .collect();
    let config = TrainConfig {
        max_epochs: 15,
        batch_size: 32,
        shuffle_seed: 3,
        max_examples: 2000,
        patience: 0,
        ..TrainConfig::default()
    };
    let start = init(&arch, 6);
    let (trained, _) = train(&start, &items, &config).unwrap();
    let pred = forward_f32(&trained, &feature).unwrap();
    assert_eq!(pred.label, 1);
    assert!(
        pred.probabilities[1] > 0.95,
        "label-1 probability {} suggests stale examples leaked in",
        pred.probabilities[1]
    );
}

#[test]
fn non_finite_loss_aborts_with_diagnostics() {
    let arch = toy_arch();
    let data = toy_items(16, true);
    let items: Vec<TrainItem> = data
        .iter()
        .map(|(v, l)| TrainItem { values: v, label: *l })
        .collect();
    let mut start = init(&arch, 2);
    // A NaN output bias reaches the logits directly (a poisoned conv weight
    // would be laundered by ReLU's NaN-ignoring max).
    let last = start.len() - 1;
    start.flat_mut()[last] = f64::NAN;
    let config = TrainConfig::default();
    assert!(matches!(
        train(&start, &items, &config),
        Err(NetworkError::NonFiniteLoss { .. })
    ));
}

#[test]
fn empty_dataset_is_an_error() {
    let arch = toy_arch();
    let start = init(&arch, 2);
    assert!(matches!(
        train(&start, &[], &TrainConfig::default()),
        Err(NetworkError::EmptyDataset)
    ));
}

#[test]
fn variant_names_round_trip() {
    for v in ArchVariant::ALL {
        assert_eq!(ArchVariant::parse(v.name()), Some(v));
    }
    assert!(ArchVariant::parse("lenet").is_none());
}

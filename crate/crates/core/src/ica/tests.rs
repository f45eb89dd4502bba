use super::*;
use crate::signal::default_channel_names;
use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FS: f64 = 500.0;

/// 35 s fixture with two planted sources — a 10 Hz sine spread over central
/// channels and a blink train over frontal channels plus the EOG lead — on a
/// small iid noise floor. Ground-truth source time courses are returned.
fn planted_fixture(noise: f64, blink_amp: f64) -> (RawRecording, Vec<f64>, Vec<f64>) {
    let n = (35.0 * FS) as usize;
    let names = default_channel_names();
    let idx = |name: &str| names.iter().position(|c| c == name).unwrap();

    let sine: Vec<f64> = (0..n)
        .map(|t| (std::f64::consts::TAU * 10.0 * t as f64 / FS).sin())
        .collect();
    let mut blinks = vec![0.0f64; n];
    let pulse_len = (0.4 * FS) as usize;
    let mut start = (1.3 * FS) as usize;
    while start + pulse_len < n {
        for i in 0..pulse_len {
            blinks[start + i] +=
                blink_amp * 0.5 * (1.0 - (std::f64::consts::TAU * i as f64 / pulse_len as f64).cos());
        }
        start += (2.5 * FS) as usize;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut samples = Array2::from_shape_fn((N_EEG_CHANNELS + 1, n), |_| {
        rng.random_range(-noise..noise)
    });
    for (ch, w) in [("C3", 1.0), ("C1", 0.8), ("CP3", 0.6)] {
        let row = idx(ch);
        for t in 0..n {
            samples[[row, t]] += w * sine[t];
        }
    }
    for (ch, w) in [("Fp1", 1.0), ("Fp2", 0.95), ("AF3", 0.7), ("AF4", 0.7)] {
        let row = idx(ch);
        for t in 0..n {
            samples[[row, t]] += w * blinks[t];
        }
    }
    for t in 0..n {
        samples[[EOG_CHANNEL, t]] += blinks[t];
    }

    let rec = RawRecording {
        samples,
        sample_rate_hz: 500,
        channel_names: names,
        intervals: vec![],
        task_names: vec![],
    };
    (rec, sine, blinks)
}

fn fit_fixture(rec: &RawRecording) -> UnmixingModel {
    fit_ica(rec, 6, 400, 1e-7, 11).expect("fixture fit converges")
}

#[test]
fn planted_sources_are_recovered() {
    let (rec, sine, blinks) = planted_fixture(0.05, 2.0);
    let model = fit_fixture(&rec);
    let comps = model.components(rec.eeg()).unwrap();

    let mut best_sine = 0.0f64;
    let mut best_blink = 0.0f64;
    for row in comps.rows() {
        let r_s = pearson(row.as_slice().unwrap(), &sine).abs();
        let r_b = pearson(row.as_slice().unwrap(), &blinks).abs();
        best_sine = best_sine.max(r_s);
        best_blink = best_blink.max(r_b);
    }
    assert!(best_sine > 0.95, "sine recovery {best_sine}");
    assert!(best_blink > 0.95, "blink recovery {best_blink}");
}

#[test]
fn rotation_is_orthonormal_and_fit_deterministic() {
    let (rec, _, _) = planted_fixture(0.05, 2.0);
    let model = fit_fixture(&rec);
    let r = &model.rotation;
    let gram = r.dot(&r.t());
    for i in 0..r.nrows() {
        for j in 0..r.ncols() {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!(
                (gram[[i, j]] - want).abs() < 1e-6,
                "gram[{i},{j}] = {}",
                gram[[i, j]]
            );
        }
    }
    let again = fit_fixture(&rec);
    assert_eq!(model.unmixing(), again.unmixing());
}

#[test]
fn eog_flagging_finds_exactly_the_blink_component() {
    let (rec, _, blinks) = planted_fixture(0.05, 2.0);
    let model = fit_fixture(&rec);
    let flags = flag_eog_components(&model, &rec, EOG_CHANNEL, 0.7).unwrap();
    assert_eq!(flags.len(), 1, "flags: {flags:?}");

    // The flagged component is the blink one.
    let comps = model.components(rec.eeg()).unwrap();
    let k = *flags.iter().next().unwrap();
    let r = pearson(comps.row(k).as_slice().unwrap(), &blinks).abs();
    assert!(r > 0.95, "flagged component vs blink corr {r}");

    // Impossible threshold flags nothing.
    let none = flag_eog_components(&model, &rec, EOG_CHANNEL, 1.0).unwrap();
    assert!(none.is_empty());
}

#[test]
fn no_blinks_means_no_flags() {
    let (rec, _, _) = planted_fixture(0.05, 0.0);
    let model = fit_fixture(&rec);
    let flags = flag_eog_components(&model, &rec, EOG_CHANNEL, 0.7).unwrap();
    assert!(flags.is_empty(), "flags: {flags:?}");
}

/// Synthetic full-rank model straight from a covariance eigendecomposition,
/// bypassing the iterative fit.
fn constructed_model(n_comp: usize, seed: u64) -> UnmixingModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Random SPD covariance.
    let m = Array2::from_shape_fn((N_EEG_CHANNELS, N_EEG_CHANNELS), |_| {
        rng.random_range(-1.0..1.0)
    });
    let cov = m.dot(&m.t()) + Array2::<f64>::eye(N_EEG_CHANNELS) * 0.5;
    let (vals, vecs) = sym_eig_desc(&cov);
    let mut whitener = Array2::zeros((n_comp, N_EEG_CHANNELS));
    let mut dewhiten = Array2::zeros((N_EEG_CHANNELS, n_comp));
    for k in 0..n_comp {
        for ch in 0..N_EEG_CHANNELS {
            whitener[[k, ch]] = vecs[[ch, k]] / vals[k].sqrt();
            dewhiten[[ch, k]] = vecs[[ch, k]] * vals[k].sqrt();
        }
    }
    let rotation = sym_orthonormalize(&Array2::from_shape_fn((n_comp, n_comp), |_| {
        rng.random_range(-1.0..1.0)
    }));
    let mixing = dewhiten.dot(&rotation.t());
    UnmixingModel {
        whitener,
        rotation,
        mixing,
        channel_means: ndarray::Array1::zeros(N_EEG_CHANNELS),
        flagged_eog: std::collections::BTreeSet::new(),
        iterations: 0,
    }
}

#[test]
fn full_rank_no_flags_gives_identity() {
    let model = constructed_model(N_EEG_CHANNELS, 4);
    let c = correction_matrix(&model);
    for i in 0..N_EEG_CHANNELS {
        for j in 0..N_EEG_CHANNELS {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!(
                (c.matrix()[[i, j]] - want).abs() < 1e-6,
                "C[{i},{j}] = {}",
                c.matrix()[[i, j]]
            );
        }
    }
}

#[test]
fn all_flagged_gives_zero_matrix() {
    let mut model = constructed_model(N_EEG_CHANNELS, 4);
    model.flagged_eog = (0..N_EEG_CHANNELS).collect();
    let c = correction_matrix(&model);
    assert!(c.matrix().iter().all(|v| v.abs() < 1e-9));
}

#[test]
fn mixing_times_unmixing_is_identity_on_retained_subspace() {
    let model = constructed_model(12, 8);
    let wa = model.unmixing().dot(&model.mixing); // [n_comp × n_comp]
    for i in 0..12 {
        for j in 0..12 {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((wa[[i, j]] - want).abs() < 1e-6);
        }
    }
}

#[test]
fn correction_removes_blink_and_keeps_sine() {
    let (rec, sine, blinks) = planted_fixture(0.05, 2.0);
    let mut model = fit_fixture(&rec);
    model.flagged_eog = flag_eog_components(&model, &rec, EOG_CHANNEL, 0.7).unwrap();
    assert!(!model.flagged_eog.is_empty());
    let c = correction_matrix(&model);

    let corrected = c.apply(rec.eeg()).unwrap();
    let names = default_channel_names();
    let fp1 = names.iter().position(|n| n == "Fp1").unwrap();
    let c3 = names.iter().position(|n| n == "C3").unwrap();

    let blink_leak = pearson(corrected.row(fp1).as_slice().unwrap(), &blinks).abs();
    assert!(blink_leak < 0.1, "blink leak after correction: {blink_leak}");
    let sine_kept = pearson(corrected.row(c3).as_slice().unwrap(), &sine).abs();
    assert!(sine_kept > 0.9, "sine after correction: {sine_kept}");

    // Idempotence: C·C = C.
    let cc = c.matrix().dot(c.matrix());
    let max_diff = cc
        .iter()
        .zip(c.matrix().iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    assert!(max_diff < 1e-6, "C·C − C max {max_diff}");

    // Energy does not increase when an orthogonal-ish source is removed.
    let norm_in: f64 = rec.eeg().iter().map(|v| v * v).sum::<f64>().sqrt();
    let norm_out: f64 = corrected.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(norm_out <= norm_in + 1e-6);

    // Unflagged components are untouched by the correction.
    let before = model.components(rec.eeg()).unwrap();
    let centered_corrected = {
        let mut x = corrected.clone();
        for mut row in x.rows_mut() {
            let m = row.mean().unwrap();
            row.mapv_inplace(|v| v - m);
        }
        x
    };
    let after = model.unmixing().dot(&centered_corrected);
    for k in 0..model.n_components() {
        if model.flagged_eog.contains(&k) {
            continue;
        }
        let r = pearson(before.row(k).as_slice().unwrap(), after.row(k).as_slice().unwrap());
        assert!(r > 0.99, "component {k} damaged: corr {r}");
    }
}

#[test]
fn correction_invariant_to_scale_ambiguity() {
    let mut model = constructed_model(10, 21);
    model.flagged_eog = [2usize, 5].into_iter().collect();
    let c_ref = correction_matrix(&model);

    // Rescale rotation rows (hence W rows) and compensate in the mixing.
    let scales = [1.7, -0.4, 2.0, 0.1, -3.0, 0.8, 1.0, -1.0, 5.0, 0.25];
    let mut scaled = model.clone();
    for (k, &s) in scales.iter().enumerate() {
        scaled.rotation.row_mut(k).mapv_inplace(|v| v * s);
        scaled.mixing.column_mut(k).mapv_inplace(|v| v / s);
    }
    let c_scaled = correction_matrix(&scaled);
    let max_diff = c_ref
        .matrix()
        .iter()
        .zip(c_scaled.matrix().iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    assert!(max_diff < 1e-9, "C changed under rescaling: {max_diff}");
}

#[test]
fn apply_is_linear_idempotent_and_checked() {
    let (rec, _, _) = planted_fixture(0.05, 2.0);
    let mut model = fit_fixture(&rec);
    model.flagged_eog = flag_eog_components(&model, &rec, EOG_CHANNEL, 0.7).unwrap();
    let c = correction_matrix(&model);

    let chunk = rec.samples.slice(ndarray::s![..N_EEG_CHANNELS, 0..600]);
    let once = c.apply(chunk).unwrap();
    let twice = c.apply(once.view()).unwrap();
    let max_val = once.iter().cloned().fold(0.0f64, |m, v| m.max(v.abs()));
    for (a, b) in once.iter().zip(twice.iter()) {
        assert!((a - b).abs() < 1e-6 * max_val.max(1.0));
    }

    // Identity passes through exactly; mismatched shapes error out.
    let id = CorrectionMatrix::identity();
    let same = id.apply(chunk).unwrap();
    assert_eq!(same, chunk.to_owned());
    assert!(id.apply(rec.samples.view()).is_err()); // 65 rows

    // Linearity.
    let scaled_in = chunk.to_owned() * 2.5;
    let scaled_out = c.apply(scaled_in.view()).unwrap();
    for (a, b) in scaled_out.iter().zip(once.iter()) {
        assert!((a - 2.5 * b).abs() < 1e-9 * max_val.max(1.0));
    }
}

#[test]
fn preconditions_are_enforced() {
    let (rec, _, _) = planted_fixture(0.05, 2.0);
    let short = RawRecording {
        samples: rec.samples.slice(ndarray::s![.., ..1000]).to_owned(),
        ..rec.clone()
    };
    assert!(matches!(
        fit_ica(&short, 4, 100, 1e-5, 1),
        Err(IcaError::TooShort { .. })
    ));
    assert!(matches!(
        fit_ica(&rec, 0, 100, 1e-5, 1),
        Err(IcaError::BadComponentCount(0))
    ));
    assert!(matches!(
        fit_ica(&rec, 65, 100, 1e-5, 1),
        Err(IcaError::BadComponentCount(65))
    ));
}

#[test]
fn non_convergence_reports_iteration_trace() {
    let (rec, _, _) = planted_fixture(0.05, 2.0);
    match fit_ica(&rec, 6, 2, 1e-15, 11) {
        Err(IcaError::NotConverged { iterations, trace }) => {
            assert_eq!(iterations, 2);
            assert!(!trace.is_empty());
        }
        other => panic!("expected NotConverged, got {other:?}"),
    }
}

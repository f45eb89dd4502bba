//! End-to-end feature/classifier pipeline on the synthetic generator:
//! class-conditioned recording → acquisition filters → streamed tensors →
//! chronological CV. The separable/chance pair here is the desk-scale
//! counterpart of an offline screening run.

use smallnet::evaluation::{cross_validate, dataset_from_recording, ExampleOrigin};
use smallnet::features::ElectrodeGrid;
use smallnet::ica::CorrectionMatrix;
use smallnet::network::{Architecture, TrainConfig};
use smallnet::signal::{
    apply_acquisition_chain, generate_recording, BandSignature, SignatureConfig, TaskSignature,
};

fn band(low: f64, high: f64, electrodes: &[&str], gain: f64) -> BandSignature {
    BandSignature {
        low_hz: low,
        high_hz: high,
        electrodes: electrodes.iter().map(|s| s.to_string()).collect(),
        power_gain: gain,
    }
}

/// The default four-task signature set used across integration tests.
pub fn four_task_config(gain: f64) -> SignatureConfig {
    SignatureConfig {
        tasks: vec![
            TaskSignature {
                name: "right_hand".into(),
                bands: vec![band(8.0, 12.0, &["C3", "C5", "CP3"], gain)],
            },
            TaskSignature {
                name: "feet".into(),
                bands: vec![band(8.0, 12.0, &["Cz", "C1", "C2"], gain)],
            },
            TaskSignature {
                name: "relax".into(),
                bands: vec![band(9.0, 12.0, &["O1", "Oz", "O2"], gain)],
            },
            TaskSignature {
                name: "humming".into(),
                bands: vec![band(5.0, 8.0, &["T7", "T8", "FT7"], gain)],
            },
        ],
        background_rms_uv: 3.0,
        background_exponent: 1.0,
        line_noise_amp_uv: 1.0,
        blink_rate_hz: 0.25,
        blink_amp_uv: 60.0,
        blink_weights: vec![
            ("Fp1".into(), 1.0),
            ("Fp2".into(), 1.0),
            ("AF3".into(), 0.8),
            ("AF4".into(), 0.8),
            ("AF7".into(), 0.7),
            ("AF8".into(), 0.7),
            ("F1".into(), 0.4),
            ("F2".into(), 0.4),
        ],
        seed: 0,
    }
}

#[test]
fn separable_pipeline_beats_090_and_shuffled_sits_at_chance() {
    let started = std::time::Instant::now();
    let config = four_task_config(4.0);
    let tasks = ["right_hand", "feet", "relax", "humming"];
    let plan: Vec<(String, f64)> = (0..51)
        .map(|i| (tasks[i % 4].to_string(), 12.0))
        .collect();

    let raw = generate_recording(&plan, &config, 20_001).unwrap();
    let filtered = apply_acquisition_chain(&raw).unwrap();
    drop(raw);
    let grid = ElectrodeGrid::default_table();
    let mut dataset =
        dataset_from_recording(&filtered, &grid, &CorrectionMatrix::identity(), ExampleOrigin::Video)
            .unwrap();
    drop(filtered);
    dataset.examples.truncate(2000);
    assert_eq!(dataset.len(), 2000);
    eprintln!("[pipeline] dataset built in {:.1} s", started.elapsed().as_secs_f64());

    let arch = Architecture::small_net();
    let train_config = TrainConfig {
        shuffle_seed: 7,
        ..TrainConfig::default()
    };

    let t = std::time::Instant::now();
    let cv = cross_validate(&dataset, &arch, &train_config, 5, 5).unwrap();
    eprintln!(
        "[pipeline] separable CV mean {:.3} ± {:.3} in {:.1} s (warnings: {:?})",
        cv.mean,
        cv.std,
        t.elapsed().as_secs_f64(),
        cv.warnings
    );
    assert!(cv.mean >= 0.90, "separable CV mean {:.3}", cv.mean);

    let shuffled = dataset.label_shuffled(99);
    let t = std::time::Instant::now();
    let cv_chance = cross_validate(&shuffled, &arch, &train_config, 5, 5).unwrap();
    eprintln!(
        "[pipeline] shuffled CV mean {:.3} ± {:.3} in {:.1} s",
        cv_chance.mean,
        cv_chance.std,
        t.elapsed().as_secs_f64()
    );
    assert!(
        (cv_chance.mean - 0.25).abs() <= 0.05,
        "chance mean {:.3}",
        cv_chance.mean
    );
}

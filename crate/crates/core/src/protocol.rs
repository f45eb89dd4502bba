//! Full-session orchestration: video recording, initial training, warm-up
//! races with a fixed model, retraining from recent race data, and the
//! adaptive loop that retrains after every race from a capped replay buffer.
//!
//! Phase order is fixed: video → warm-up → retrain → adaptive. Game-origin
//! examples are labeled by the pad type at the decision tick (the acc₁
//! attribution), and model swaps happen strictly between races.

use crate::evaluation::{dataset_from_recording, Dataset, Example, ExampleOrigin};
use crate::features::ElectrodeGrid;
use crate::game::{
    generate_track, run_race, NetDecoder, RaceSetup, SignaturePilot, SpeedModel,
};
use crate::ica::{fit_correction, CorrectionMatrix, EOG_FLAG_THRESHOLD};
use crate::network::{self, Architecture, ModelParams, TrainConfig, TrainItem};
use crate::seeds::{self, stage};
use crate::signal::{apply_acquisition_chain, generate_recording, SignatureConfig};
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("generator must define exactly {want} tasks (one per pad type), got {got}")]
    TaskCount { got: usize, want: usize },
    #[error(transparent)]
    Signal(#[from] crate::signal::SignalError),
    #[error(transparent)]
    Ica(#[from] crate::ica::IcaError),
    #[error(transparent)]
    Feature(#[from] crate::features::FeatureError),
    #[error(transparent)]
    Network(#[from] crate::network::NetworkError),
    #[error(transparent)]
    Eval(#[from] crate::evaluation::EvalError),
    #[error(transparent)]
    Game(#[from] crate::game::GameError),
}

/// Counts, caps, and seeds for one session.
#[derive(Debug, Clone)]
pub struct SessionPlan {
    pub n_videos: usize,
    pub n_warmup_races: usize,
    /// How many of the last warm-up races seed the first game retrain.
    pub n_retrain_races: usize,
    pub n_adaptive_races: usize,
    pub buffer_cap: usize,
    /// On-screen duration of each pad during a video.
    pub video_pad_duration_s: f64,
    pub video_n_pads: usize,
    pub race_n_pads: usize,
    pub pad_length_m: f64,
    /// ICA components fitted on the first video recording.
    pub ica_components: usize,
    /// Pilot reaction delay at pad crossings.
    pub reaction_delay_s: f64,
    /// Distribution-shift knob: game-phase band gains scale by this...
    pub game_gain_scale: f64,
    /// ...and game-phase background noise by this.
    pub game_noise_scale: f64,
    pub master_seed: u64,
}

impl Default for SessionPlan {
    fn default() -> Self {
        SessionPlan {
            n_videos: 20,
            n_warmup_races: 11,
            n_retrain_races: 5,
            n_adaptive_races: 10,
            buffer_cap: 2000,
            video_pad_duration_s: 6.75,
            video_n_pads: 20,
            race_n_pads: crate::game::DEFAULT_N_PADS,
            pad_length_m: crate::game::DEFAULT_PAD_LENGTH_M,
            ica_components: 24,
            reaction_delay_s: 0.0,
            game_gain_scale: 1.0,
            game_noise_scale: 1.0,
            master_seed: 0,
        }
    }
}

/// Capped FIFO of labeled examples; eviction is strictly oldest-first.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: VecDeque<Example>,
    cap: usize,
}

impl ReplayBuffer {
    pub fn new(cap: usize) -> ReplayBuffer {
        ReplayBuffer {
            items: VecDeque::new(),
            cap,
        }
    }

    pub fn push(&mut self, example: Example) {
        if self.items.len() == self.cap {
            self.items.pop_front();
        }
        self.items.push_back(example);
    }

    pub fn extend(&mut self, examples: impl IntoIterator<Item = Example>) {
        for e in examples {
            self.push(e);
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn iter(&self) -> impl Iterator<Item = &Example> {
        self.items.iter()
    }

    pub fn train_items(&self) -> Vec<TrainItem<'_>> {
        self.items
            .iter()
            .map(|e| TrainItem {
                values: &e.values,
                label: e.label,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Warmup,
    Adaptive,
}

impl Phase {
    pub fn name(&self) -> &'static str {
        match self {
            Phase::Warmup => "warmup",
            Phase::Adaptive => "adaptive",
        }
    }
}

/// One race's metrics plus the test accuracy of the model that ran it.
#[derive(Debug, Clone)]
pub struct SessionRow {
    pub race_id: usize,
    pub phase: Phase,
    pub completion_time_s: f64,
    pub acc1: f64,
    pub acc2: f64,
    /// Holdout accuracy of the model in use, measured when it was trained.
    pub test_accuracy: f64,
    pub mean_decode_wall_s: f64,
    pub max_decode_wall_s: f64,
}

#[derive(Debug, Clone)]
pub struct SessionReport {
    pub rows: Vec<SessionRow>,
    pub video_example_count: usize,
    /// Holdout accuracy of the video-trained model.
    pub video_test_accuracy: f64,
    /// ICA components flagged as ocular during calibration.
    pub flagged_components: Vec<usize>,
    /// Set when a phase failed; earlier phases are preserved.
    pub error: Option<String>,
}

impl SessionReport {
    /// (test accuracy, race completion time) pairs, one per race row.
    pub fn accuracy_time_pairs(&self) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .map(|r| (r.test_accuracy, r.completion_time_s))
            .collect()
    }

    pub fn pearson_accuracy_time(&self) -> f64 {
        let (acc, time): (Vec<f64>, Vec<f64>) = self.accuracy_time_pairs().into_iter().unzip();
        crate::evaluation::pearson(&acc, &time)
    }

    pub fn mean_acc2(&self, phase: Phase) -> f64 {
        let rows: Vec<&SessionRow> = self.rows.iter().filter(|r| r.phase == phase).collect();
        if rows.is_empty() {
            return 0.0;
        }
        rows.iter().map(|r| r.acc2).sum::<f64>() / rows.len() as f64
    }

    pub fn mean_test_accuracy(&self, phase: Phase) -> f64 {
        let rows: Vec<&SessionRow> = self.rows.iter().filter(|r| r.phase == phase).collect();
        if rows.is_empty() {
            return 0.0;
        }
        rows.iter().map(|r| r.test_accuracy).sum::<f64>() / rows.len() as f64
    }
}

/// Simulates the 20-video calibration phase: scripted tracks watched without
/// feedback, the pilot performing each pad's task for its full on-screen
/// duration. Returns the streamed dataset (origin = video) with session-clock
/// timestamps.
pub fn record_videos(
    plan: &SessionPlan,
    generator: &SignatureConfig,
    grid: &ElectrodeGrid,
    correction: &CorrectionMatrix,
) -> Result<Dataset, ProtocolError> {
    let mut dataset = Dataset::new(generator.tasks.iter().map(|t| t.name.clone()).collect());
    let mut session_time = 0.0;
    for v in 0..plan.n_videos {
        let recording = video_recording(plan, generator, v)?;
        let filtered = apply_acquisition_chain(&recording)?;
        let video =
            dataset_from_recording(&filtered, grid, correction, ExampleOrigin::Video)?;
        let duration = filtered.duration_s();
        for mut e in video.examples {
            e.timestamp_s += session_time;
            dataset.examples.push(e);
        }
        session_time += duration;
    }
    Ok(dataset)
}

fn video_recording(
    plan: &SessionPlan,
    generator: &SignatureConfig,
    video_idx: usize,
) -> Result<crate::signal::RawRecording, ProtocolError> {
    let track = generate_track(
        plan.video_n_pads,
        plan.pad_length_m,
        seeds::derive_indexed(plan.master_seed, stage::VIDEO, video_idx as u64),
    )?;
    let script: Vec<(String, f64)> = track
        .pads
        .iter()
        .map(|p| {
            (
                generator.tasks[p.pad_type as usize].name.clone(),
                plan.video_pad_duration_s,
            )
        })
        .collect();
    let rec = generate_recording(
        &script,
        generator,
        seeds::derive_indexed(plan.master_seed, stage::SIGNAL, video_idx as u64),
    )?;
    Ok(rec)
}

/// Retrains on the buffer's contents starting from the current parameters.
/// On training failure the previous model is kept and the failure logged.
/// Returns the new model and its holdout accuracy when available.
pub fn retrain_after_race(
    model: &ModelParams,
    buffer: &ReplayBuffer,
    config: &TrainConfig,
) -> (ModelParams, Option<f64>) {
    if buffer.is_empty() {
        log::warn!("retrain skipped: empty replay buffer");
        return (model.clone(), None);
    }
    let items = buffer.train_items();
    match network::train(model, &items, config) {
        Ok((trained, history)) => {
            let acc = history.iter().filter_map(|h| h.holdout_accuracy).fold(
                None,
                |best: Option<f64>, a| Some(best.map_or(a, |b| b.max(a))),
            );
            (trained, acc)
        }
        Err(e) => {
            log::warn!("retrain failed, keeping previous model: {e}");
            (model.clone(), None)
        }
    }
}

/// Runs the full session. Returns a report with one row per race; if a phase
/// fails after the video phase, the report carries the rows accumulated so
/// far plus an error marker.
pub fn run_session(
    plan: &SessionPlan,
    arch: &Architecture,
    train_config: &TrainConfig,
    generator: &SignatureConfig,
    speed: &SpeedModel,
    grid: &ElectrodeGrid,
) -> Result<SessionReport, ProtocolError> {
    if generator.tasks.len() != arch.n_classes {
        return Err(ProtocolError::TaskCount {
            got: generator.tasks.len(),
            want: arch.n_classes,
        });
    }

    // Calibration: ICA on the first (filtered) video recording.
    let first = apply_acquisition_chain(&video_recording(plan, generator, 0)?)?;
    let (model_ica, correction) = fit_correction(
        &first,
        plan.ica_components,
        200,
        1e-4,
        seeds::derive(plan.master_seed, stage::ICA),
        EOG_FLAG_THRESHOLD,
    )?;
    drop(first);
    let flagged: Vec<usize> = model_ica.flagged_eog.iter().copied().collect();
    log::info!("calibration flagged {} ocular component(s)", flagged.len());

    // Video phase: record and train on the full video dataset (the 2000-cap
    // budget applies to race-time retraining, not the initial fit).
    let video_data = record_videos(plan, generator, grid, &correction)?;
    let video_items = video_data.train_items();
    let mut video_cfg = train_config.clone();
    video_cfg.max_examples = video_items.len().max(1);
    video_cfg.shuffle_seed = seeds::derive(plan.master_seed, stage::SHUFFLE);
    let init = network::init(
        arch,
        seeds::derive(plan.master_seed, stage::INIT),
    );
    let (video_model, history) = network::train(&init, &video_items, &video_cfg)?;
    let video_test_accuracy = history
        .iter()
        .filter_map(|h| h.holdout_accuracy)
        .fold(0.0f64, f64::max);

    let mut report = SessionReport {
        rows: Vec::new(),
        video_example_count: video_data.len(),
        video_test_accuracy,
        flagged_components: flagged,
        error: None,
    };
    drop(video_data);

    // Game-phase pilot: same synthesis, shifted by the knob.
    let game_generator = generator.shifted(plan.game_gain_scale, plan.game_noise_scale);
    let mut pilot = match SignaturePilot::new(
        &game_generator,
        seeds::derive(plan.master_seed, stage::PILOT),
    ) {
        Ok(p) => p,
        Err(e) => {
            report.error = Some(format!("pilot construction failed: {e}"));
            return Ok(report);
        }
    };

    let mut retrain_cfg = train_config.clone();
    let mut model = video_model;
    let mut model_test_acc = video_test_accuracy;
    let mut buffer = ReplayBuffer::new(plan.buffer_cap);
    let mut session_time = plan.n_videos as f64 * plan.video_n_pads as f64 * plan.video_pad_duration_s;
    let mut race_id = 0usize;
    let mut warmup_tail: VecDeque<Vec<Example>> = VecDeque::new();

    // Warm-up: fixed video-trained model.
    for _ in 0..plan.n_warmup_races {
        match one_race(plan, speed, grid, &correction, &mut pilot, &model, race_id, session_time) {
            Ok((row_base, examples)) => {
                session_time += row_base.completion_time_s;
                report.rows.push(SessionRow {
                    phase: Phase::Warmup,
                    test_accuracy: model_test_acc,
                    ..row_base
                });
                warmup_tail.push_back(examples);
                if warmup_tail.len() > plan.n_retrain_races {
                    warmup_tail.pop_front();
                }
                race_id += 1;
            }
            Err(e) => {
                report.error = Some(format!("warm-up race {race_id} failed: {e}"));
                return Ok(report);
            }
        }
    }

    // Retrain from the last races' game data.
    for examples in warmup_tail.drain(..) {
        buffer.extend(examples);
    }
    retrain_cfg.shuffle_seed =
        seeds::derive_indexed(plan.master_seed, stage::SHUFFLE, 1_000 + race_id as u64);
    let (m, acc) = retrain_after_race(&model, &buffer, &retrain_cfg);
    model = m;
    if let Some(a) = acc {
        model_test_acc = a;
    }

    // Adaptive phase: race, append, retrain, swap between races.
    for _ in 0..plan.n_adaptive_races {
        match one_race(plan, speed, grid, &correction, &mut pilot, &model, race_id, session_time) {
            Ok((row_base, examples)) => {
                session_time += row_base.completion_time_s;
                report.rows.push(SessionRow {
                    phase: Phase::Adaptive,
                    test_accuracy: model_test_acc,
                    ..row_base
                });
                buffer.extend(examples);
                let retrain_start = std::time::Instant::now();
                retrain_cfg.shuffle_seed = seeds::derive_indexed(
                    plan.master_seed,
                    stage::SHUFFLE,
                    1_000 + race_id as u64,
                );
                let (m, acc) = retrain_after_race(&model, &buffer, &retrain_cfg);
                model = m;
                if let Some(a) = acc {
                    model_test_acc = a;
                }
                log::info!(
                    "race {race_id}: retrained on {} examples in {:.2} s",
                    buffer.len(),
                    retrain_start.elapsed().as_secs_f64()
                );
                race_id += 1;
            }
            Err(e) => {
                report.error = Some(format!("adaptive race {race_id} failed: {e}"));
                return Ok(report);
            }
        }
    }

    Ok(report)
}

#[allow(clippy::too_many_arguments)]
fn one_race(
    plan: &SessionPlan,
    speed: &SpeedModel,
    grid: &ElectrodeGrid,
    correction: &CorrectionMatrix,
    pilot: &mut SignaturePilot,
    model: &ModelParams,
    race_id: usize,
    session_time: f64,
) -> Result<(SessionRow, Vec<Example>), ProtocolError> {
    let track = generate_track(
        plan.race_n_pads,
        plan.pad_length_m,
        seeds::derive_indexed(plan.master_seed, stage::TRACK, race_id as u64),
    )?;
    let setup = RaceSetup {
        track: &track,
        speed: *speed,
        grid,
        correction,
        reaction_delay_s: plan.reaction_delay_s,
        collect_examples: true,
    };
    let mut decoder = NetDecoder {
        params: model.clone(),
    };
    let run = run_race(&setup, pilot, &mut decoder)?;
    let mut examples = run.examples;
    for e in &mut examples {
        e.timestamp_s += session_time;
    }
    let row = SessionRow {
        race_id,
        phase: Phase::Warmup, // overwritten by caller
        completion_time_s: run.result.completion_time_s,
        acc1: run.result.acc1,
        acc2: run.result.acc2,
        test_accuracy: 0.0, // overwritten by caller
        mean_decode_wall_s: run.result.mean_decode_wall_s,
        max_decode_wall_s: run.result.max_decode_wall_s,
    };
    Ok((row, examples))
}

//! Race-game simulator: a track of typed pads, an avatar whose speed depends
//! on whether the active command matches the pad under it, and a closed loop
//! that turns the trailing 1.2 s of pilot EEG into a command every 300 ms.
//!
//! Event bookkeeping: a decode event is attributed to its decision tick — the
//! moment the trailing window closes and the chunk is handed to the decoder.
//! `chunk_start_time_s` is that tick; the command takes effect at
//! `issue_time_s = tick + decode latency`. With an instant decoder the two
//! attributions coincide and acc₁ = acc₂; a slow decoder shifts the issue
//! time onto later pads, which is exactly what splits the two accuracies.
//!
//! The simulated clock drives everything. Wall-clock decode time is measured
//! against the 300 ms budget and reported, but never alters simulated
//! results.

mod pilot;

pub use pilot::{Pilot, SignaturePilot};

use crate::evaluation::{Example, ExampleOrigin};
use crate::features::{self, ElectrodeGrid, FeatureTensor};
use crate::ica::CorrectionMatrix;
use crate::network::{forward, ModelParams, Prediction};
use crate::signal::{N_EEG_CHANNELS, SAMPLE_RATE_HZ};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Pad types (one per mental-task command).
pub const N_PAD_TYPES: usize = 4;
/// Default pad length; 20 pads at 7.5 m and v_correct 2.5 m/s give the
/// 60-second perfect run.
pub const DEFAULT_PAD_LENGTH_M: f64 = 7.5;
pub const DEFAULT_N_PADS: usize = 20;
/// Seconds between decode ticks.
pub const CADENCE_S: f64 = features::CHUNK_CADENCE_S;

#[derive(Debug, Error)]
pub enum GameError {
    #[error("track must have at least one pad")]
    EmptyTrack,
    #[error("speed model must satisfy v_correct > v_none >= v_wrong > 0")]
    BadSpeeds,
    #[error("no command events")]
    NoEvents,
    #[error(transparent)]
    Feature(#[from] crate::features::FeatureError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pad {
    pub pad_type: u8,
    pub length_m: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub pads: Vec<Pad>,
    pub seed: u64,
}

impl Track {
    pub fn length_m(&self) -> f64 {
        self.pads.iter().map(|p| p.length_m).sum()
    }

    /// Pad index at a position; boundaries are half-open `[start, end)` and
    /// positions past the end clamp to the last pad. A small tolerance snaps
    /// positions within 1e-9 m of a boundary onto the next pad, so that
    /// integration error cannot leave the avatar "just before" a pad it has
    /// reached.
    pub fn pad_at(&self, position_m: f64) -> usize {
        const PAD_EPS: f64 = 1e-9;
        let mut acc = 0.0;
        for (i, pad) in self.pads.iter().enumerate() {
            acc += pad.length_m;
            if position_m < acc - PAD_EPS {
                return i;
            }
        }
        self.pads.len() - 1
    }

    pub fn pad_type_at(&self, position_m: f64) -> u8 {
        self.pads[self.pad_at(position_m)].pad_type
    }
}

/// Pad types i.i.d. uniform over the four commands, fixed pad length.
pub fn generate_track(n_pads: usize, pad_length_m: f64, seed: u64) -> Result<Track, GameError> {
    if n_pads == 0 {
        return Err(GameError::EmptyTrack);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pads = (0..n_pads)
        .map(|_| Pad {
            pad_type: rng.random_range(0..N_PAD_TYPES as u8),
            length_m: pad_length_m,
        })
        .collect();
    Ok(Track { pads, seed })
}

/// Avatar speed per command/pad relation. A command stays in effect for
/// `command_effect_duration_s` or until the next command, whichever first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedModel {
    pub v_correct: f64,
    pub v_none: f64,
    pub v_wrong: f64,
    pub command_effect_duration_s: f64,
}

impl Default for SpeedModel {
    fn default() -> Self {
        SpeedModel {
            v_correct: 2.5,
            v_none: 1.0,
            v_wrong: 0.75,
            command_effect_duration_s: CADENCE_S,
        }
    }
}

impl SpeedModel {
    pub fn validate(&self) -> Result<(), GameError> {
        if self.v_correct > self.v_none && self.v_none >= self.v_wrong && self.v_wrong > 0.0 {
            Ok(())
        } else {
            Err(GameError::BadSpeeds)
        }
    }

    pub fn velocity(&self, command: Option<u8>, pad_type: u8) -> f64 {
        match command {
            None => self.v_none,
            Some(c) if c == pad_type => self.v_correct,
            Some(_) => self.v_wrong,
        }
    }

    /// Re-solves `v_correct` so a perfect run over `track_length_m` takes
    /// `target_s` (commands flow from the first tick).
    pub fn calibrated(mut self, track_length_m: f64, target_s: f64) -> SpeedModel {
        self.v_correct = track_length_m / target_s;
        self
    }
}

/// Avatar kinematic state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AvatarState {
    pub position_m: f64,
    pub time_s: f64,
    pub pad_index: usize,
}

impl AvatarState {
    pub fn start() -> AvatarState {
        AvatarState {
            position_m: 0.0,
            time_s: 0.0,
            pad_index: 0,
        }
    }
}

/// Advances one time step: velocity is evaluated at the step start and held
/// for `dt`, then the pad index is updated.
pub fn step(
    state: &AvatarState,
    command: Option<u8>,
    track: &Track,
    speed: &SpeedModel,
    dt: f64,
) -> AvatarState {
    let pad_type = track.pads[state.pad_index.min(track.pads.len() - 1)].pad_type;
    let v = speed.velocity(command, pad_type);
    let position_m = state.position_m + v * dt;
    AvatarState {
        position_m,
        time_s: state.time_s + dt,
        pad_index: track.pad_at(position_m),
    }
}

/// One decode event with both pad attributions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommandEvent {
    /// Decision tick the chunk is attributed to.
    pub chunk_start_time_s: f64,
    /// When the command took effect (tick + decode latency).
    pub issue_time_s: f64,
    pub chunk_start_pad: usize,
    pub chunk_start_pad_type: u8,
    pub pad_at_issue: usize,
    pub pad_type_at_issue: u8,
    pub predicted_label: u8,
    /// False when the race ended before the command could take effect.
    pub applied: bool,
    /// Decode latency exceeded the cadence budget.
    pub late: bool,
}

/// Outcome of one simulated race.
#[derive(Debug, Clone)]
pub struct RaceResult {
    pub completion_time_s: f64,
    pub acc1: f64,
    pub acc2: f64,
    pub events: Vec<CommandEvent>,
    pub track: Track,
    /// Wall-clock decode statistics (feature extraction + decoder), seconds.
    pub mean_decode_wall_s: f64,
    pub max_decode_wall_s: f64,
}

/// Race outcome plus the labeled examples harvested from it.
#[derive(Debug, Clone)]
pub struct RaceRun {
    pub result: RaceResult,
    pub examples: Vec<Example>,
}

/// acc₁ = fraction of events whose prediction matches the chunk-start pad
/// type; acc₂ = fraction matching the pad type at command issue.
pub fn accuracies(events: &[CommandEvent]) -> Result<(f64, f64), GameError> {
    if events.is_empty() {
        return Err(GameError::NoEvents);
    }
    let n = events.len() as f64;
    let acc1 = events
        .iter()
        .filter(|e| e.predicted_label == e.chunk_start_pad_type)
        .count() as f64
        / n;
    let acc2 = events
        .iter()
        .filter(|e| e.predicted_label == e.pad_type_at_issue)
        .count() as f64
        / n;
    Ok((acc1, acc2))
}

/// Context handed to decoders alongside the tensor. Network decoders ignore
/// it; reference decoders (oracle, all-wrong) read the pad directly.
#[derive(Debug, Clone, Copy)]
pub struct ChunkContext {
    pub time_s: f64,
    pub pad_index: usize,
    pub pad_type: u8,
}

pub trait Decoder {
    fn decode(&mut self, tensor: &FeatureTensor, ctx: &ChunkContext) -> Prediction;
    fn name(&self) -> &'static str {
        "decoder"
    }
}

/// Perfect player: commands the pad under the avatar at the decision tick.
pub struct OracleDecoder;

impl Decoder for OracleDecoder {
    fn decode(&mut self, _tensor: &FeatureTensor, ctx: &ChunkContext) -> Prediction {
        one_hot(ctx.pad_type)
    }
    fn name(&self) -> &'static str {
        "oracle"
    }
}

/// Always commands a mismatching pad type.
pub struct AllWrongDecoder;

impl Decoder for AllWrongDecoder {
    fn decode(&mut self, _tensor: &FeatureTensor, ctx: &ChunkContext) -> Prediction {
        one_hot((ctx.pad_type + 1) % N_PAD_TYPES as u8)
    }
    fn name(&self) -> &'static str {
        "all-wrong"
    }
}

/// Correct with probability `p`, otherwise uniform over the wrong labels.
pub struct NoisyOracleDecoder {
    pub p_correct: f64,
    rng: ChaCha8Rng,
}

impl NoisyOracleDecoder {
    pub fn new(p_correct: f64, seed: u64) -> Self {
        NoisyOracleDecoder {
            p_correct,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Decoder for NoisyOracleDecoder {
    fn decode(&mut self, _tensor: &FeatureTensor, ctx: &ChunkContext) -> Prediction {
        let correct = self.rng.random_range(0.0..1.0) < self.p_correct;
        let label = if correct {
            ctx.pad_type
        } else {
            let shift = self.rng.random_range(1..N_PAD_TYPES as u8);
            (ctx.pad_type + shift) % N_PAD_TYPES as u8
        };
        one_hot(label)
    }
    fn name(&self) -> &'static str {
        "noisy-oracle"
    }
}

/// Wraps a decoder with a fixed artificial decode latency (simulated).
pub struct FixedLatencyDecoder<D: Decoder> {
    pub inner: D,
    pub latency_s: f64,
}

impl<D: Decoder> Decoder for FixedLatencyDecoder<D> {
    fn decode(&mut self, tensor: &FeatureTensor, ctx: &ChunkContext) -> Prediction {
        let mut p = self.inner.decode(tensor, ctx);
        p.decode_latency_s += self.latency_s;
        p
    }
    fn name(&self) -> &'static str {
        "latency-wrapped"
    }
}

/// The trained network as a decoder.
pub struct NetDecoder {
    pub params: ModelParams,
}

impl Decoder for NetDecoder {
    fn decode(&mut self, tensor: &FeatureTensor, _ctx: &ChunkContext) -> Prediction {
        forward(&self.params, tensor).expect("tensor shape matches architecture")
    }
    fn name(&self) -> &'static str {
        "network"
    }
}

fn one_hot(label: u8) -> Prediction {
    let mut probabilities = vec![0.0; N_PAD_TYPES];
    probabilities[label as usize] = 1.0;
    Prediction {
        probabilities,
        label,
        decode_latency_s: 0.0,
    }
}

/// Static configuration of one race.
pub struct RaceSetup<'a> {
    pub track: &'a Track,
    pub speed: SpeedModel,
    pub grid: &'a ElectrodeGrid,
    pub correction: &'a CorrectionMatrix,
    /// Pilot keeps emitting the previous pad's class for this long after a
    /// crossing (human lag; default 0).
    pub reaction_delay_s: f64,
    pub collect_examples: bool,
}

/// Runs the closed loop until the avatar crosses the finish line.
///
/// Every tick: the trailing 600-sample window becomes a tensor (correction,
/// Welch, projection), the decoder turns it into a command scheduled at
/// `tick + latency`, and the next 150 samples of pilot signal are generated
/// sample by sample while commands take effect and the avatar advances.
/// Examples are labeled by the pad type at the decision tick.
pub fn run_race(
    setup: &RaceSetup<'_>,
    pilot: &mut dyn Pilot,
    decoder: &mut dyn Decoder,
) -> Result<RaceRun, GameError> {
    setup.speed.validate()?;
    if setup.track.pads.is_empty() {
        return Err(GameError::EmptyTrack);
    }
    let track = setup.track;
    let fs = SAMPLE_RATE_HZ as f64;
    let dt = 1.0 / fs;
    let samples_per_tick = (CADENCE_S * fs).round() as usize;
    let window = features::welch::CHUNK_SAMPLES;
    let length = track.length_m();

    // Ring buffer of the trailing window, pre-filled with the pilot idling
    // on the start pad before the race begins.
    let mut ring = ndarray::Array2::<f64>::zeros((N_EEG_CHANNELS, window));
    let mut sample_buf = [0.0f64; N_EEG_CHANNELS];
    let start_class = track.pads[0].pad_type;
    for i in 0..window {
        pilot.next_sample(start_class, &mut sample_buf);
        for ch in 0..N_EEG_CHANNELS {
            ring[[ch, i]] = sample_buf[ch];
        }
    }
    let mut ring_head = 0usize; // oldest sample position

    let mut position = 0.0f64;
    let mut active_command: Option<(u8, f64)> = None; // (label, applied at)
    let mut pending: Vec<(f64, u8, usize)> = Vec::new(); // (issue, label, event idx)
    let mut events: Vec<CommandEvent> = Vec::new();
    let mut examples = Vec::new();
    let mut last_crossing: (u8, f64) = (start_class, f64::NEG_INFINITY); // (previous class, when)
    let mut wall_times = Vec::new();

    let mut tick = 0usize;
    let completion_time_s = 'race: loop {
        let t_tick = tick as f64 * CADENCE_S;
        let pad_index = track.pad_at(position);
        let pad_type = track.pads[pad_index].pad_type;

        // Assemble the trailing window in chronological order.
        let mut chunk = ndarray::Array2::<f64>::zeros((N_EEG_CHANNELS, window));
        for i in 0..window {
            let src = (ring_head + i) % window;
            for ch in 0..N_EEG_CHANNELS {
                chunk[[ch, i]] = ring[[ch, src]];
            }
        }

        let wall_start = std::time::Instant::now();
        let mut tensor = features::chunk_tensor(chunk.view(), setup.grid, setup.correction)?;
        tensor.origin_time_s = t_tick;
        let ctx = ChunkContext {
            time_s: t_tick,
            pad_index,
            pad_type,
        };
        let prediction = decoder.decode(&tensor, &ctx);
        wall_times.push(wall_start.elapsed().as_secs_f64());

        let latency = prediction.decode_latency_s.max(0.0);
        let event_idx = events.len();
        events.push(CommandEvent {
            chunk_start_time_s: t_tick,
            issue_time_s: t_tick + latency,
            chunk_start_pad: pad_index,
            chunk_start_pad_type: pad_type,
            pad_at_issue: pad_index,
            pad_type_at_issue: pad_type,
            predicted_label: prediction.label,
            applied: false,
            late: latency > CADENCE_S,
        });
        pending.push((t_tick + latency, prediction.label, event_idx));

        if setup.collect_examples {
            let mut ex = Example::from_tensor(&tensor, pad_type, ExampleOrigin::Game);
            ex.timestamp_s = t_tick;
            examples.push(ex);
        }

        // Advance one cadence block sample by sample.
        for i in 0..samples_per_tick {
            let t = t_tick + i as f64 * dt;

            // Commands take effect at their issue time (sample-grid quantized).
            while let Some(pos) = pending
                .iter()
                .position(|&(issue, _, _)| issue <= t + 1e-12)
            {
                let (_, label, idx) = pending.remove(pos);
                let ev = &mut events[idx];
                ev.applied = true;
                ev.pad_at_issue = track.pad_at(position);
                ev.pad_type_at_issue = track.pads[ev.pad_at_issue].pad_type;
                active_command = Some((label, t));
            }
            // Expire a stale command (no replacement arrived in time).
            if let Some((_, since)) = active_command {
                if t - since > setup.speed.command_effect_duration_s + 1e-12 {
                    active_command = None;
                }
            }

            let current_pad_type = track.pads[track.pad_at(position)].pad_type;
            // Pilot class: previous pad's class within the reaction delay.
            let class = if t - last_crossing.1 < setup.reaction_delay_s {
                last_crossing.0
            } else {
                current_pad_type
            };
            pilot.next_sample(class, &mut sample_buf);
            for ch in 0..N_EEG_CHANNELS {
                ring[[ch, ring_head]] = sample_buf[ch];
            }
            ring_head = (ring_head + 1) % window;

            let v = setup
                .speed
                .velocity(active_command.map(|(l, _)| l), current_pad_type);
            let next_position = position + v * dt;
            if next_position >= length {
                break 'race t + (length - position) / v;
            }
            if track.pad_at(next_position) != track.pad_at(position) {
                last_crossing = (current_pad_type, t + dt);
            }
            position = next_position;
        }
        tick += 1;
    };

    // Events whose commands never took effect keep the final pad attribution.
    let final_pad = track.pads.len() - 1;
    for ev in events.iter_mut().filter(|e| !e.applied) {
        ev.pad_at_issue = final_pad;
        ev.pad_type_at_issue = track.pads[final_pad].pad_type;
    }
    let (acc1, acc2) = accuracies(&events)?;
    let mean_decode_wall_s = wall_times.iter().sum::<f64>() / wall_times.len().max(1) as f64;
    let max_decode_wall_s = wall_times.iter().cloned().fold(0.0, f64::max);

    Ok(RaceRun {
        result: RaceResult {
            completion_time_s,
            acc1,
            acc2,
            events,
            track: track.clone(),
            mean_decode_wall_s,
            max_decode_wall_s,
        },
        examples,
    })
}

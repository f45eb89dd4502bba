//! Class-conditioned synthetic EEG generation and the acquisition-chain
//! filters (0.1 Hz highpass, 50 Hz notch).
//!
//! The generator stands in for a pilot wearing a cap: it produces a 64-channel
//! EEG plus one EOG channel at 500 Hz, where each mental-task label leaves a
//! band-power signature on a configured electrode subset, on top of a 1/f^α
//! background, optional 50 Hz line noise, and raised-cosine blink transients
//! mixed into the frontal channels and the EOG channel.
//!
//! Synthetic signatures are calibration knobs for the rest of the pipeline,
//! not claims about human EEG statistics.

mod filters;
mod synth;

pub use filters::{FilterKind, FilterSpec, StreamingFilter};

use ndarray::Array2;
use thiserror::Error;

/// Channels per recording: 64 EEG + 1 EOG.
pub const N_CHANNELS: usize = 65;
/// EEG channels (everything except the trailing EOG).
pub const N_EEG_CHANNELS: usize = 64;
/// Index of the EOG channel.
pub const EOG_CHANNEL: usize = 64;
/// Paper-conformant sampling rate.
pub const SAMPLE_RATE_HZ: u32 = 500;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("unknown task label `{0}` in generation plan")]
    UnknownTask(String),
    #[error("non-positive duration {0} s in generation plan")]
    BadDuration(f64),
    #[error("unknown electrode `{0}` in signature config")]
    UnknownElectrode(String),
    #[error("band {low}..{high} Hz outside (0, {nyquist}) Hz")]
    BadBand { low: f64, high: f64, nyquist: f64 },
    #[error("filter {what} {value} Hz must lie in (0, {nyquist}) Hz")]
    BadFilter {
        what: &'static str,
        value: f64,
        nyquist: f64,
    },
    #[error("channel count mismatch: recording has {got}, filter state has {want}")]
    ChannelMismatch { got: usize, want: usize },
}

/// A labeled span of samples, `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interval {
    pub start: usize,
    pub end: usize,
    pub label: u8,
}

/// Multichannel time series in microvolts with per-interval task labels.
#[derive(Debug, Clone)]
pub struct RawRecording {
    /// `[n_channels × n_samples]`, microvolts.
    pub samples: Array2<f64>,
    pub sample_rate_hz: u32,
    /// 64 EEG names followed by `"EOG"`.
    pub channel_names: Vec<String>,
    /// Non-overlapping, sorted, within `[0, n_samples)`.
    pub intervals: Vec<Interval>,
    /// Label id → task name.
    pub task_names: Vec<String>,
}

impl RawRecording {
    pub fn n_samples(&self) -> usize {
        self.samples.ncols()
    }

    pub fn n_channels(&self) -> usize {
        self.samples.nrows()
    }

    pub fn duration_s(&self) -> f64 {
        self.n_samples() as f64 / self.sample_rate_hz as f64
    }

    /// Label of the interval containing `sample`, if any.
    pub fn label_at(&self, sample: usize) -> Option<u8> {
        self.intervals
            .iter()
            .find(|iv| iv.start <= sample && sample < iv.end)
            .map(|iv| iv.label)
    }

    /// EEG-only view (drops the EOG row).
    pub fn eeg(&self) -> ndarray::ArrayView2<'_, f64> {
        self.samples.slice(ndarray::s![..N_EEG_CHANNELS, ..])
    }
}

/// One band-power signature: task activity boosts `[low_hz, high_hz)` power
/// on `electrodes` by `power_gain` relative to the background in that band.
#[derive(Debug, Clone)]
pub struct BandSignature {
    pub low_hz: f64,
    pub high_hz: f64,
    pub electrodes: Vec<String>,
    pub power_gain: f64,
}

#[derive(Debug, Clone)]
pub struct TaskSignature {
    pub name: String,
    pub bands: Vec<BandSignature>,
}

/// Full generator configuration. Deterministic given a seed.
#[derive(Debug, Clone)]
pub struct SignatureConfig {
    pub tasks: Vec<TaskSignature>,
    /// Per-channel background RMS in µV.
    pub background_rms_uv: f64,
    /// α of the 1/f^α background.
    pub background_exponent: f64,
    pub line_noise_amp_uv: f64,
    pub blink_rate_hz: f64,
    pub blink_amp_uv: f64,
    /// (channel, weight) pairs for mixing the blink waveform into EEG.
    pub blink_weights: Vec<(String, f64)>,
    pub seed: u64,
}

impl SignatureConfig {
    pub fn task_index(&self, name: &str) -> Option<u8> {
        self.tasks
            .iter()
            .position(|t| t.name == name)
            .map(|i| i as u8)
    }

    /// Returns a copy with every band's `power_gain` multiplied by
    /// `gain_scale` and the background RMS by `noise_scale`. This is the
    /// video-vs-game distribution-shift knob.
    pub fn shifted(&self, gain_scale: f64, noise_scale: f64) -> SignatureConfig {
        let mut out = self.clone();
        for task in &mut out.tasks {
            for band in &mut task.bands {
                band.power_gain *= gain_scale;
            }
        }
        out.background_rms_uv *= noise_scale;
        out
    }
}

/// The canonical 64-channel montage used throughout, row-major over the
/// shipped 7×11 grid, plus the EOG channel.
pub fn default_channel_names() -> Vec<String> {
    crate::features::grid::DEFAULT_CHANNEL_ORDER
        .iter()
        .map(|s| s.to_string())
        .chain(std::iter::once("EOG".to_string()))
        .collect()
}

/// Generates a recording whose intervals follow `plan` (task label, seconds).
///
/// Each interval carries its task's band-power signature on the configured
/// electrode subsets; blinks and line noise span the whole recording.
/// Bit-identical for identical `(plan, config, seed)`.
pub fn generate_recording(
    plan: &[(String, f64)],
    config: &SignatureConfig,
    seed: u64,
) -> Result<RawRecording, SignalError> {
    synth::generate(plan, config, seed)
}

/// Applies `spec` independently to every channel, whole-signal.
///
/// Chunked application through [`StreamingFilter`] produces the same output
/// as this call (state continuity), which is what the online path uses.
pub fn apply_filter(recording: &RawRecording, spec: &FilterSpec) -> Result<RawRecording, SignalError> {
    let mut filter = StreamingFilter::new(spec, recording.n_channels())?;
    let mut out = recording.clone();
    filter.process_in_place(&mut out.samples.view_mut())?;
    Ok(out)
}

/// Applies the paper's acquisition chain: 0.1 Hz highpass then 50 Hz notch.
pub fn apply_acquisition_chain(recording: &RawRecording) -> Result<RawRecording, SignalError> {
    let fs = recording.sample_rate_hz;
    let hp = apply_filter(recording, &FilterSpec::highpass(0.1, fs)?)?;
    apply_filter(&hp, &FilterSpec::notch(50.0, 30.0, fs)?)
}

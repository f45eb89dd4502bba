//! Frequency-domain synthesis of the class-conditioned recording.
//!
//! Per interval and channel, a 1/f^α background is built from fixed-amplitude
//! random-phase spectral coefficients and inverse-transformed; task bands add
//! extra random-phase coefficients sized so the added power is `power_gain`
//! times the background power in that band. Blink pulses and line noise are
//! added over the whole recording afterwards.

use super::{
    BandSignature, Interval, RawRecording, SignalError, SignatureConfig, EOG_CHANNEL,
    N_CHANNELS, N_EEG_CHANNELS, SAMPLE_RATE_HZ,
};
use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustfft::{num_complex::Complex, FftPlanner};
use std::collections::HashMap;

/// RMS of the white noise floor on the EOG channel, µV.
const EOG_NOISE_RMS_UV: f64 = 0.5;
/// Blink pulse length in seconds (raised cosine).
const BLINK_LEN_S: f64 = 0.4;

pub(super) fn generate(
    plan: &[(String, f64)],
    config: &SignatureConfig,
    seed: u64,
) -> Result<RawRecording, SignalError> {
    let fs = SAMPLE_RATE_HZ;
    let channel_names = super::default_channel_names();
    let index_of: HashMap<&str, usize> = channel_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();

    validate_config(config, &index_of, fs)?;

    // Resolve the plan into intervals.
    let mut intervals = Vec::with_capacity(plan.len());
    let mut cursor = 0usize;
    for (label, duration_s) in plan {
        if *duration_s <= 0.0 {
            return Err(SignalError::BadDuration(*duration_s));
        }
        let label_idx = config
            .task_index(label)
            .ok_or_else(|| SignalError::UnknownTask(label.clone()))?;
        let n = (duration_s * fs as f64).round() as usize;
        intervals.push(Interval {
            start: cursor,
            end: cursor + n,
            label: label_idx,
        });
        cursor += n;
    }
    let n_samples = cursor;

    let mut samples = Array2::<f64>::zeros((N_CHANNELS, n_samples));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut planner = FftPlanner::<f64>::new();

    for iv in &intervals {
        let task = &config.tasks[iv.label as usize];
        let n = iv.end - iv.start;
        let fft = planner.plan_fft_inverse(n);
        let spec_shape = SpectrumShape::new(n, fs as f64, config.background_exponent);

        for ch in 0..N_EEG_CHANNELS {
            let mut spectrum = spec_shape.background(config.background_rms_uv, &mut rng);
            for band in &task.bands {
                if band.electrodes.iter().any(|e| index_of[e.as_str()] == ch) {
                    spec_shape.add_band(&mut spectrum, band, config.background_rms_uv, &mut rng);
                }
            }
            fft.process(&mut spectrum);
            let inv_n = 1.0 / n as f64;
            for (t, c) in spectrum.iter().enumerate() {
                samples[[ch, iv.start + t]] = c.re * inv_n;
            }
        }

        // EOG floor: white noise, uniform with matched RMS.
        let amp = EOG_NOISE_RMS_UV * 3f64.sqrt();
        for t in iv.start..iv.end {
            samples[[EOG_CHANNEL, t]] = rng.random_range(-amp..amp);
        }
    }

    add_blinks(&mut samples, config, &index_of, fs, &mut rng);
    add_line_noise(&mut samples, config, fs, &mut rng);

    Ok(RawRecording {
        samples,
        sample_rate_hz: fs,
        channel_names,
        intervals,
        task_names: config.tasks.iter().map(|t| t.name.clone()).collect(),
    })
}

fn validate_config(
    config: &SignatureConfig,
    index_of: &HashMap<&str, usize>,
    fs: u32,
) -> Result<(), SignalError> {
    let nyquist = fs as f64 / 2.0;
    for task in &config.tasks {
        for band in &task.bands {
            if !(band.low_hz > 0.0 && band.low_hz < band.high_hz && band.high_hz < nyquist) {
                return Err(SignalError::BadBand {
                    low: band.low_hz,
                    high: band.high_hz,
                    nyquist,
                });
            }
            for e in &band.electrodes {
                if !index_of.contains_key(e.as_str()) {
                    return Err(SignalError::UnknownElectrode(e.clone()));
                }
            }
        }
    }
    for (e, _) in &config.blink_weights {
        if !index_of.contains_key(e.as_str()) {
            return Err(SignalError::UnknownElectrode(e.clone()));
        }
    }
    Ok(())
}

/// Spectral envelope bookkeeping for one block length.
struct SpectrumShape {
    n: usize,
    fs: f64,
    /// g_k = 1/max(f_k,1)^(α/2) for k = 1..=n/2.
    gains: Vec<f64>,
    /// Scale A such that fixed-amplitude coefficients A·g_k give unit RMS.
    unit_scale: f64,
}

impl SpectrumShape {
    fn new(n: usize, fs: f64, alpha: f64) -> Self {
        let half = n / 2;
        let mut gains = Vec::with_capacity(half);
        let mut sum = 0.0;
        for k in 1..=half {
            let f = k as f64 * fs / n as f64;
            let g = 1.0 / f.max(1.0).powf(alpha / 2.0);
            gains.push(g);
            // Conjugate-pair bins count twice; the Nyquist bin (even n) once.
            let w = if n % 2 == 0 && k == half { 1.0 } else { 2.0 };
            sum += w * g * g;
        }
        // var(x) = (A²/n²)·Σ w·g², so A = n/sqrt(Σ w·g²) for unit variance.
        let unit_scale = n as f64 / sum.sqrt();
        SpectrumShape {
            n,
            fs,
            gains,
            unit_scale,
        }
    }

    fn bin_freq(&self, k: usize) -> f64 {
        k as f64 * self.fs / self.n as f64
    }

    /// Fixed-amplitude random-phase background with the 1/f^α envelope.
    fn background(&self, rms: f64, rng: &mut ChaCha8Rng) -> Vec<Complex<f64>> {
        let mut spec = vec![Complex::new(0.0, 0.0); self.n];
        let a = rms * self.unit_scale;
        let half = self.n / 2;
        for k in 1..=half {
            let mag = a * self.gains[k - 1];
            if self.n % 2 == 0 && k == half {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                spec[k] = Complex::new(sign * mag, 0.0);
            } else {
                let phase = rng.random_range(0.0..std::f64::consts::TAU);
                let c = Complex::from_polar(mag, phase);
                spec[k] = c;
                spec[self.n - k] = c.conj();
            }
        }
        spec
    }

    /// Background power falling inside `[low, high)` Hz for the given RMS.
    fn band_background_power(&self, rms: f64, low: f64, high: f64) -> f64 {
        let a = rms * self.unit_scale;
        let half = self.n / 2;
        let mut p = 0.0;
        for k in 1..=half {
            let f = self.bin_freq(k);
            if f >= low && f < high {
                let w = if self.n % 2 == 0 && k == half { 1.0 } else { 2.0 };
                p += w * (a * self.gains[k - 1]).powi(2);
            }
        }
        p / (self.n as f64 * self.n as f64)
    }

    /// Adds flat-amplitude random-phase content over the band, sized so the
    /// added power equals `power_gain` × background power in the band.
    fn add_band(
        &self,
        spec: &mut [Complex<f64>],
        band: &BandSignature,
        rms: f64,
        rng: &mut ChaCha8Rng,
    ) {
        let target = band.power_gain * self.band_background_power(rms, band.low_hz, band.high_hz);
        if target <= 0.0 {
            return;
        }
        let half = self.n / 2;
        let bins: Vec<usize> = (1..=half)
            .filter(|&k| {
                let f = self.bin_freq(k);
                f >= band.low_hz && f < band.high_hz
            })
            .collect();
        if bins.is_empty() {
            return;
        }
        let weight_sum: f64 = bins
            .iter()
            .map(|&k| if self.n % 2 == 0 && k == half { 1.0 } else { 2.0 })
            .sum();
        // (B²/n²)·Σw = target
        let b = self.n as f64 * (target / weight_sum).sqrt();
        for &k in &bins {
            if self.n % 2 == 0 && k == half {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                spec[k] += Complex::new(sign * b, 0.0);
            } else {
                let phase = rng.random_range(0.0..std::f64::consts::TAU);
                let c = Complex::from_polar(b, phase);
                spec[k] += c;
                spec[self.n - k] += c.conj();
            }
        }
    }
}

fn add_blinks(
    samples: &mut Array2<f64>,
    config: &SignatureConfig,
    index_of: &HashMap<&str, usize>,
    fs: u32,
    rng: &mut ChaCha8Rng,
) {
    if config.blink_rate_hz <= 0.0 || config.blink_amp_uv <= 0.0 {
        return;
    }
    let n_samples = samples.ncols();
    let duration = n_samples as f64 / fs as f64;
    let pulse_len = (BLINK_LEN_S * fs as f64).round() as usize;
    let weights: Vec<(usize, f64)> = config
        .blink_weights
        .iter()
        .map(|(name, w)| (index_of[name.as_str()], *w))
        .collect();

    let mut t = 0.0;
    loop {
        let u: f64 = rng.random_range(f64::EPSILON..1.0);
        t += -u.ln() / config.blink_rate_hz;
        if t >= duration {
            break;
        }
        let start = (t * fs as f64).round() as usize;
        for i in 0..pulse_len {
            let idx = start + i;
            if idx >= n_samples {
                break;
            }
            let w = 0.5 * (1.0 - (std::f64::consts::TAU * i as f64 / pulse_len as f64).cos());
            let v = config.blink_amp_uv * w;
            for &(ch, weight) in &weights {
                samples[[ch, idx]] += weight * v;
            }
            samples[[EOG_CHANNEL, idx]] += v;
        }
    }
}

fn add_line_noise(samples: &mut Array2<f64>, config: &SignatureConfig, fs: u32, rng: &mut ChaCha8Rng) {
    if config.line_noise_amp_uv <= 0.0 {
        return;
    }
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let w = std::f64::consts::TAU * 50.0 / fs as f64;
    for t in 0..samples.ncols() {
        let v = config.line_noise_amp_uv * (w * t as f64 + phase).sin();
        for ch in 0..N_EEG_CHANNELS {
            samples[[ch, t]] += v;
        }
    }
}

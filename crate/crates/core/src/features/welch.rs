//! Welch power spectrum of one 1.2 s chunk.
//!
//! A 600-sample chunk is split into 150-sample segments stepped by 37 samples
//! (13 segments; 75% overlap rounded down to an integer step), each segment
//! is Hamming-windowed and zero-padded to a 256-point DFT, and the squared
//! magnitudes are averaged. The one-sided output spans 129 bins at
//! k·(250/128) Hz, normalized by the window energy, with interior bins
//! doubled to account for negative frequencies.

use super::FeatureError;
use rustfft::{num_complex::Complex, Fft, FftPlanner};
use std::sync::{Arc, OnceLock};

/// Samples per chunk (1.2 s at 500 Hz).
pub const CHUNK_SAMPLES: usize = 600;
/// Segment length (300 ms).
pub const SEGMENT_SAMPLES: usize = 150;
/// Integer step below the exact 75% overlap (37.5).
pub const SEGMENT_STEP: usize = 37;
/// Segments per chunk.
pub const N_SEGMENTS: usize = 13;
/// DFT length after zero-padding.
pub const FFT_LEN: usize = 256;
/// One-sided bin count.
pub const N_BINS: usize = FFT_LEN / 2 + 1;
/// Hz per bin for 500 Hz input.
pub const BIN_HZ: f64 = 250.0 / 128.0;

fn fft256() -> &'static Arc<dyn Fft<f64>> {
    static FFT: OnceLock<Arc<dyn Fft<f64>>> = OnceLock::new();
    FFT.get_or_init(|| FftPlanner::new().plan_fft_forward(FFT_LEN))
}

fn hamming() -> &'static ([f64; SEGMENT_SAMPLES], f64) {
    static WINDOW: OnceLock<([f64; SEGMENT_SAMPLES], f64)> = OnceLock::new();
    WINDOW.get_or_init(|| {
        let mut w = [0.0; SEGMENT_SAMPLES];
        let denom = (SEGMENT_SAMPLES - 1) as f64;
        for (i, v) in w.iter_mut().enumerate() {
            *v = 0.54 - 0.46 * (std::f64::consts::TAU * i as f64 / denom).cos();
        }
        let energy: f64 = w.iter().map(|v| v * v).sum();
        (w, energy)
    })
}

/// Welch power spectrum of exactly [`CHUNK_SAMPLES`] samples: 129 values.
pub fn welch_psd(chunk: &[f64]) -> Result<Vec<f64>, FeatureError> {
    if chunk.len() != CHUNK_SAMPLES {
        return Err(FeatureError::WrongChunkLength { got: chunk.len() });
    }
    let (window, window_energy) = hamming();
    let fft = fft256();

    let mut acc = [0.0f64; N_BINS];
    let mut buf = [Complex::new(0.0, 0.0); FFT_LEN];
    for seg in 0..N_SEGMENTS {
        let start = seg * SEGMENT_STEP;
        for i in 0..SEGMENT_SAMPLES {
            buf[i] = Complex::new(chunk[start + i] * window[i], 0.0);
        }
        for v in buf[SEGMENT_SAMPLES..].iter_mut() {
            *v = Complex::new(0.0, 0.0);
        }
        fft.process(&mut buf);
        for (k, a) in acc.iter_mut().enumerate() {
            *a += buf[k].norm_sqr();
        }
    }

    let scale = 1.0 / (N_SEGMENTS as f64 * window_energy);
    let mut out = Vec::with_capacity(N_BINS);
    for (k, a) in acc.iter().enumerate() {
        let one_sided = if k == 0 || k == N_BINS - 1 { 1.0 } else { 2.0 };
        out.push(a * one_sided * scale);
    }
    Ok(out)
}

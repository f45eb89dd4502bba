//! Second-order recursive (biquad) filters with per-channel streaming state.
//!
//! One section per filter: highpass at 0.1 Hz (Q = 1/√2) and notch at 50 Hz
//! (Q = 30). Direct form II transposed, so chunked processing with carried
//! state reproduces whole-signal processing sample for sample.

use super::SignalError;
use ndarray::ArrayViewMut2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FilterKind {
    Highpass { cutoff_hz: f64, q: f64 },
    Notch { center_hz: f64, q: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct FilterSpec {
    pub kind: FilterKind,
    pub sample_rate_hz: u32,
}

impl FilterSpec {
    pub fn highpass(cutoff_hz: f64, sample_rate_hz: u32) -> Result<Self, SignalError> {
        let spec = FilterSpec {
            kind: FilterKind::Highpass {
                cutoff_hz,
                q: std::f64::consts::FRAC_1_SQRT_2,
            },
            sample_rate_hz,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn notch(center_hz: f64, q: f64, sample_rate_hz: u32) -> Result<Self, SignalError> {
        let spec = FilterSpec {
            kind: FilterKind::Notch { center_hz, q },
            sample_rate_hz,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<(), SignalError> {
        let nyquist = self.sample_rate_hz as f64 / 2.0;
        let (what, f) = match self.kind {
            FilterKind::Highpass { cutoff_hz, .. } => ("cutoff", cutoff_hz),
            FilterKind::Notch { center_hz, .. } => ("center", center_hz),
        };
        if !(f > 0.0 && f < nyquist) {
            return Err(SignalError::BadFilter {
                what,
                value: f,
                nyquist,
            });
        }
        Ok(())
    }

    fn coefficients(&self) -> Biquad {
        let fs = self.sample_rate_hz as f64;
        match self.kind {
            FilterKind::Highpass { cutoff_hz, q } => Biquad::highpass(cutoff_hz, q, fs),
            FilterKind::Notch { center_hz, q } => Biquad::notch(center_hz, q, fs),
        }
    }
}

/// Normalized biquad coefficients (a0 = 1).
#[derive(Debug, Clone, Copy)]
struct Biquad {
    b0: f64,
    b1: f64,
    b2: f64,
    a1: f64,
    a2: f64,
}

impl Biquad {
    fn highpass(freq: f64, q: f64, fs: f64) -> Self {
        let w0 = 2.0 * std::f64::consts::PI * freq / fs;
        let (sin_w0, cos_w0) = w0.sin_cos();
        let alpha = sin_w0 / (2.0 * q);
        let a0 = 1.0 + alpha;
        Biquad {
            b0: (1.0 + cos_w0) / 2.0 / a0,
            b1: -(1.0 + cos_w0) / a0,
            b2: (1.0 + cos_w0) / 2.0 / a0,
            a1: -2.0 * cos_w0 / a0,
            a2: (1.0 - alpha) / a0,
        }
    }

    fn notch(freq: f64, q: f64, fs: f64) -> Self {
        let w0 = 2.0 * std::f64::consts::PI * freq / fs;
        let (sin_w0, cos_w0) = w0.sin_cos();
        let alpha = sin_w0 / (2.0 * q);
        let a0 = 1.0 + alpha;
        Biquad {
            b0: 1.0 / a0,
            b1: -2.0 * cos_w0 / a0,
            b2: 1.0 / a0,
            a1: -2.0 * cos_w0 / a0,
            a2: (1.0 - alpha) / a0,
        }
    }
}

/// A biquad applied per channel, carrying state between chunks.
#[derive(Debug, Clone)]
pub struct StreamingFilter {
    coeffs: Biquad,
    /// (z1, z2) per channel.
    state: Vec<(f64, f64)>,
}

impl StreamingFilter {
    pub fn new(spec: &FilterSpec, n_channels: usize) -> Result<Self, SignalError> {
        spec.validate()?;
        Ok(StreamingFilter {
            coeffs: spec.coefficients(),
            state: vec![(0.0, 0.0); n_channels],
        })
    }

    pub fn n_channels(&self) -> usize {
        self.state.len()
    }

    /// Filters one channel's samples in place, advancing that channel's state.
    pub fn process_channel(&mut self, channel: usize, samples: &mut [f64]) {
        let c = self.coeffs;
        let (mut z1, mut z2) = self.state[channel];
        for x in samples.iter_mut() {
            let y = c.b0 * *x + z1;
            z1 = c.b1 * *x - c.a1 * y + z2;
            z2 = c.b2 * *x - c.a2 * y;
            *x = y;
        }
        self.state[channel] = (z1, z2);
    }

    /// Filters a `[n_channels × n]` chunk in place.
    pub fn process_in_place(&mut self, chunk: &mut ArrayViewMut2<'_, f64>) -> Result<(), SignalError> {
        if chunk.nrows() != self.state.len() {
            return Err(SignalError::ChannelMismatch {
                got: chunk.nrows(),
                want: self.state.len(),
            });
        }
        for (ch, mut row) in chunk.rows_mut().into_iter().enumerate() {
            if let Some(slice) = row.as_slice_mut() {
                self.process_channel(ch, slice);
            } else {
                // Non-contiguous rows: go element by element.
                let c = self.coeffs;
                let (mut z1, mut z2) = self.state[ch];
                for x in row.iter_mut() {
                    let y = c.b0 * *x + z1;
                    z1 = c.b1 * *x - c.a1 * y + z2;
                    z2 = c.b2 * *x - c.a2 * y;
                    *x = y;
                }
                self.state[ch] = (z1, z2);
            }
        }
        Ok(())
    }

    /// Resets all channel states to zero.
    pub fn reset(&mut self) {
        for s in &mut self.state {
            *s = (0.0, 0.0);
        }
    }
}

//! The simulated compliant pilot: a signal source whose class follows the
//! pad under the avatar, switching instantly at boundaries (sample-level).
//!
//! [`SignaturePilot`] pre-synthesizes one stationary pool per task with the
//! same generator and acquisition filters as offline recordings, then streams
//! samples out of the active task's pool. Per-task cursors persist across
//! switches, so each class's signal stays phase-continuous. The video-vs-game
//! distribution shift is injected by building the pools from a shifted
//! generator config.

use crate::signal::{
    apply_acquisition_chain, generate_recording, SignalError, SignatureConfig, N_EEG_CHANNELS,
};
use ndarray::Array2;

pub trait Pilot {
    /// Writes the next EEG sample (64 channels, µV) for the active class.
    fn next_sample(&mut self, class: u8, out: &mut [f64; N_EEG_CHANNELS]);
}

/// Pool length per task. Long enough that wrap-around joins are rare.
const POOL_SECONDS: f64 = 40.0;

pub struct SignaturePilot {
    /// One `[64 × n]` filtered pool per task label.
    pools: Vec<Array2<f64>>,
    cursors: Vec<usize>,
}

impl SignaturePilot {
    /// Builds pools for every task in `config`, seeded per task.
    pub fn new(config: &SignatureConfig, seed: u64) -> Result<SignaturePilot, SignalError> {
        let mut pools = Vec::with_capacity(config.tasks.len());
        for (i, task) in config.tasks.iter().enumerate() {
            let plan = vec![(task.name.clone(), POOL_SECONDS)];
            let raw = generate_recording(&plan, config, crate::seeds::derive_indexed(
                seed,
                crate::seeds::stage::PILOT,
                i as u64,
            ))?;
            let filtered = apply_acquisition_chain(&raw)?;
            pools.push(filtered.eeg().to_owned());
        }
        Ok(SignaturePilot {
            cursors: vec![0; pools.len()],
            pools,
        })
    }
}

impl Pilot for SignaturePilot {
    fn next_sample(&mut self, class: u8, out: &mut [f64; N_EEG_CHANNELS]) {
        let pool = &self.pools[class as usize];
        let cursor = &mut self.cursors[class as usize];
        let col = pool.column(*cursor);
        for (o, v) in out.iter_mut().zip(col.iter()) {
            *o = *v;
        }
        *cursor = (*cursor + 1) % pool.ncols();
    }
}

//! Spectral-topographic feature extraction: a 1.2 s, 64-channel EEG chunk
//! becomes a (129, 7, 11) tensor of band powers arranged on the electrode
//! grid, emitted every 300 ms with 900 ms overlap between chunks.

pub mod grid;
pub mod welch;

pub use grid::{ElectrodeGrid, GRID_COLS, GRID_ROWS};
pub use welch::{welch_psd, BIN_HZ, CHUNK_SAMPLES, N_BINS};

use crate::ica::CorrectionMatrix;
use crate::signal::RawRecording;
use ndarray::{Array2, Array3, ArrayView2, s};
use thiserror::Error;

/// Samples between consecutive chunk starts (300 ms at 500 Hz).
pub const CHUNK_STEP: usize = 150;
/// Seconds between consecutive chunks.
pub const CHUNK_CADENCE_S: f64 = 0.3;
/// Chunk length in seconds.
pub const CHUNK_LEN_S: f64 = 1.2;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("chunk must have {} samples, got {got}", welch::CHUNK_SAMPLES)]
    WrongChunkLength { got: usize },
    #[error("expected {want} channels, got {got}")]
    ChannelCount { got: usize, want: usize },
    #[error("channel `{0}` does not match the grid's channel order")]
    UnmappedChannel(String),
    #[error("grid table line {line}: {reason}")]
    GridParse { line: usize, reason: String },
    #[error(transparent)]
    Ica(#[from] crate::ica::IcaError),
}

/// One (129, 7, 11) non-negative spectral image stack.
#[derive(Debug, Clone)]
pub struct FeatureTensor {
    /// `[frequency × row × col]`.
    pub values: Array3<f64>,
    /// Chunk start time within its recording.
    pub origin_time_s: f64,
}

impl FeatureTensor {
    pub fn shape(&self) -> (usize, usize, usize) {
        let s = self.values.shape();
        (s[0], s[1], s[2])
    }

    /// Flat f32 copy in `[freq, row, col]` order (storage dtype).
    pub fn to_f32(&self) -> Vec<f32> {
        self.values.iter().map(|&v| v as f32).collect()
    }

    /// Rebuilds a tensor from storage.
    pub fn from_f32(values: &[f32], origin_time_s: f64) -> Option<FeatureTensor> {
        if values.len() != N_BINS * GRID_ROWS * GRID_COLS {
            return None;
        }
        let arr = Array3::from_shape_vec(
            (N_BINS, GRID_ROWS, GRID_COLS),
            values.iter().map(|&v| v as f64).collect(),
        )
        .ok()?;
        Some(FeatureTensor {
            values: arr,
            origin_time_s,
        })
    }
}

/// Projects per-channel spectra `[n_channels × 129]` onto the grid.
///
/// Occupied cells hold their channel's power (collisions averaged); empty
/// cells copy their nearest occupied cell.
pub fn project(spectra: ArrayView2<'_, f64>, grid: &ElectrodeGrid) -> Result<FeatureTensor, FeatureError> {
    if spectra.nrows() != grid.n_channels() {
        return Err(FeatureError::ChannelCount {
            got: spectra.nrows(),
            want: grid.n_channels(),
        });
    }
    if spectra.ncols() != N_BINS {
        return Err(FeatureError::WrongChunkLength {
            got: spectra.ncols(),
        });
    }

    let mut values = Array3::<f64>::zeros((N_BINS, GRID_ROWS, GRID_COLS));
    let mut counts = Array2::<u32>::zeros((GRID_ROWS, GRID_COLS));
    for ch in 0..grid.n_channels() {
        let (r, c) = grid.cell_of_index(ch);
        counts[[r, c]] += 1;
        for f in 0..N_BINS {
            values[[f, r, c]] += spectra[[ch, f]];
        }
    }
    for r in 0..GRID_ROWS {
        for c in 0..GRID_COLS {
            let n = counts[[r, c]];
            if n > 1 {
                let inv = 1.0 / n as f64;
                for f in 0..N_BINS {
                    values[[f, r, c]] *= inv;
                }
            }
        }
    }
    for &(er, ec) in grid.empty_cells() {
        let (sr, sc) = grid
            .fill_source((er, ec))
            .expect("every empty cell has a fill source");
        for f in 0..N_BINS {
            values[[f, er, ec]] = values[[f, sr, sc]];
        }
    }
    Ok(FeatureTensor {
        values,
        origin_time_s: 0.0,
    })
}

/// Full per-chunk pipeline: ocular correction, Welch spectra per channel,
/// grid projection. `chunk` is `[64 × 600]` in grid channel order.
pub fn chunk_tensor(
    chunk: ArrayView2<'_, f64>,
    grid: &ElectrodeGrid,
    correction: &CorrectionMatrix,
) -> Result<FeatureTensor, FeatureError> {
    if chunk.nrows() != grid.n_channels() {
        return Err(FeatureError::ChannelCount {
            got: chunk.nrows(),
            want: grid.n_channels(),
        });
    }
    if chunk.ncols() != welch::CHUNK_SAMPLES {
        return Err(FeatureError::WrongChunkLength { got: chunk.ncols() });
    }
    let corrected = correction.apply(chunk)?;
    let mut spectra = Array2::<f64>::zeros((grid.n_channels(), N_BINS));
    for (ch, row) in corrected.rows().into_iter().enumerate() {
        let psd = welch_psd(row.as_slice().expect("corrected chunk rows are contiguous"))?;
        spectra.row_mut(ch).assign(&ndarray::ArrayView1::from(&psd));
    }
    project(spectra.view(), grid)
}

/// Streams a recording into tensors: tensor `i` covers samples
/// `[150·i, 150·i + 600)`. A recording shorter than one chunk yields an
/// empty sequence. Each chunk is computed independently, so streaming output
/// equals per-chunk batch recomputation bit for bit.
pub fn stream(
    recording: &RawRecording,
    grid: &ElectrodeGrid,
    correction: &CorrectionMatrix,
) -> Result<Vec<FeatureTensor>, FeatureError> {
    grid.check_channel_order(&recording.channel_names)?;
    let n = recording.n_samples();
    if n < welch::CHUNK_SAMPLES {
        return Ok(Vec::new());
    }
    let n_chunks = (n - welch::CHUNK_SAMPLES) / CHUNK_STEP + 1;
    let fs = recording.sample_rate_hz as f64;
    let mut out = Vec::with_capacity(n_chunks);
    for i in 0..n_chunks {
        let start = i * CHUNK_STEP;
        let chunk = recording
            .samples
            .slice(s![..grid.n_channels(), start..start + welch::CHUNK_SAMPLES]);
        let mut tensor = chunk_tensor(chunk, grid, correction)?;
        tensor.origin_time_s = start as f64 / fs;
        out.push(tensor);
    }
    Ok(out)
}

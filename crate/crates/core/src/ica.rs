//! Ocular-artifact correction: fit an unmixing matrix offline, flag the
//! components that track the EOG channel, and collapse the result into a
//! single 64×64 correction matrix applied to online chunks.
//!
//! The decomposition is symmetric fixed-point ICA with a tanh contrast on
//! whitened, mean-removed EEG channels. With flagged mixing columns zeroed,
//! `C = A_zeroed · W` reconstructs the signal without the ocular subspace;
//! `C` is idempotent and invariant to ICA's scale/permutation ambiguity.
//! One matrix is fitted per session and reused for every online chunk.

use crate::signal::{RawRecording, EOG_CHANNEL, N_EEG_CHANNELS};
use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IcaError {
    #[error("recording too short for ICA: {got_s:.1} s < {need_s:.1} s")]
    TooShort { got_s: f64, need_s: f64 },
    #[error("n_components {0} outside 1..={N_EEG_CHANNELS}")]
    BadComponentCount(usize),
    #[error("no convergence after {iterations} iterations (last row changes: {trace:?})")]
    NotConverged {
        iterations: usize,
        /// Row-change history of the final iterations.
        trace: Vec<f64>,
    },
    #[error("empty recording")]
    Empty,
    #[error("bad EOG channel index {0}")]
    BadEogIndex(usize),
    #[error("dimension mismatch: expected {want} rows, got {got}")]
    Dimension { got: usize, want: usize },
}

/// Minimum recording length for a fit.
pub const MIN_FIT_SECONDS: f64 = 30.0;

/// Fitted decomposition of the 64 EEG channels.
#[derive(Debug, Clone)]
pub struct UnmixingModel {
    /// `[n_comp × 64]`, PCA whitening of the centered data.
    pub whitener: Array2<f64>,
    /// `[n_comp × n_comp]`, orthonormal.
    pub rotation: Array2<f64>,
    /// Mixing `A = E·D^{1/2}·Rᵀ`, `[64 × n_comp]`; pseudo-inverse of `W`.
    pub mixing: Array2<f64>,
    /// Per-channel means removed before whitening.
    pub channel_means: Array1<f64>,
    /// Components flagged as ocular.
    pub flagged_eog: BTreeSet<usize>,
    pub iterations: usize,
}

impl UnmixingModel {
    pub fn n_components(&self) -> usize {
        self.rotation.nrows()
    }

    /// Unmixing `W = rotation · whitener`, `[n_comp × 64]`.
    pub fn unmixing(&self) -> Array2<f64> {
        self.rotation.dot(&self.whitener)
    }

    /// Component time courses of centered EEG data `[64 × n]`.
    pub fn components(&self, eeg: ArrayView2<'_, f64>) -> Result<Array2<f64>, IcaError> {
        if eeg.nrows() != self.whitener.ncols() {
            return Err(IcaError::Dimension {
                got: eeg.nrows(),
                want: self.whitener.ncols(),
            });
        }
        let centered = center_rows(&eeg);
        Ok(self.unmixing().dot(&centered))
    }
}

/// The session-long 64×64 ocular correction.
#[derive(Debug, Clone)]
pub struct CorrectionMatrix {
    matrix: Array2<f64>,
}

impl CorrectionMatrix {
    pub fn identity() -> CorrectionMatrix {
        CorrectionMatrix {
            matrix: Array2::eye(N_EEG_CHANNELS),
        }
    }

    pub fn from_matrix(matrix: Array2<f64>) -> CorrectionMatrix {
        assert_eq!(matrix.nrows(), matrix.ncols());
        CorrectionMatrix { matrix }
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn is_identity(&self) -> bool {
        let n = self.matrix.nrows();
        (0..n).all(|i| {
            (0..n).all(|j| {
                let want = if i == j { 1.0 } else { 0.0 };
                (self.matrix[[i, j]] - want).abs() < 1e-12
            })
        })
    }

    /// `C · chunk`; shape preserved.
    pub fn apply(&self, chunk: ArrayView2<'_, f64>) -> Result<Array2<f64>, IcaError> {
        if chunk.nrows() != self.matrix.ncols() {
            return Err(IcaError::Dimension {
                got: chunk.nrows(),
                want: self.matrix.ncols(),
            });
        }
        Ok(self.matrix.dot(&chunk))
    }
}

/// Fits symmetric fixed-point ICA (tanh contrast) on the EEG channels.
///
/// Whitening comes from the eigendecomposition of the sample covariance;
/// the rotation starts from a seeded random matrix and is re-orthonormalized
/// symmetrically every step. Convergence is declared when the largest
/// sign-invariant row change `1 − |⟨w_new, w_old⟩|` drops below `tol`.
pub fn fit_ica(
    recording: &RawRecording,
    n_components: usize,
    max_iter: usize,
    tol: f64,
    seed: u64,
) -> Result<UnmixingModel, IcaError> {
    let duration = recording.duration_s();
    if duration < MIN_FIT_SECONDS {
        return Err(IcaError::TooShort {
            got_s: duration,
            need_s: MIN_FIT_SECONDS,
        });
    }
    if n_components == 0 || n_components > N_EEG_CHANNELS {
        return Err(IcaError::BadComponentCount(n_components));
    }

    let eeg = recording.eeg();
    let n = eeg.ncols();
    let means = eeg.mean_axis(ndarray::Axis(1)).expect("non-empty");
    let centered = {
        let mut x = eeg.to_owned();
        for (mut row, &m) in x.rows_mut().into_iter().zip(means.iter()) {
            row.mapv_inplace(|v| v - m);
        }
        x
    };

    // Whitening from the covariance eigendecomposition.
    let cov = centered.dot(&centered.t()) / (n as f64 - 1.0);
    let (eigvals, eigvecs) = sym_eig_desc(&cov);
    let floor = eigvals[0].max(0.0) * 1e-12 + f64::MIN_POSITIVE;
    let mut whitener = Array2::<f64>::zeros((n_components, N_EEG_CHANNELS));
    let mut dewhiten = Array2::<f64>::zeros((N_EEG_CHANNELS, n_components));
    for k in 0..n_components {
        let lam = eigvals[k].max(floor);
        let inv_sqrt = 1.0 / lam.sqrt();
        let sqrt = lam.sqrt();
        for ch in 0..N_EEG_CHANNELS {
            whitener[[k, ch]] = eigvecs[[ch, k]] * inv_sqrt;
            dewhiten[[ch, k]] = eigvecs[[ch, k]] * sqrt;
        }
    }
    let z = whitener.dot(&centered); // [n_comp × n]

    // Seeded random rotation, symmetrically orthonormalized.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rotation = Array2::from_shape_fn((n_components, n_components), |_| {
        rng.random_range(-1.0..1.0)
    });
    rotation = sym_orthonormalize(&rotation);

    let inv_n = 1.0 / n as f64;
    let mut trace = Vec::new();
    let mut converged_at = None;
    for iter in 0..max_iter {
        let y = rotation.dot(&z);
        let g = y.mapv(f64::tanh);
        // E[g'(y)] per component: g' = 1 − tanh².
        let g_prime_mean: Vec<f64> = g
            .rows()
            .into_iter()
            .map(|row| row.iter().map(|&v| 1.0 - v * v).sum::<f64>() * inv_n)
            .collect();
        let mut next = g.dot(&z.t());
        next.mapv_inplace(|v| v * inv_n);
        for (i, mut row) in next.rows_mut().into_iter().enumerate() {
            row.scaled_add(-g_prime_mean[i], &rotation.row(i));
        }
        let next = sym_orthonormalize(&next);

        let delta = (0..n_components)
            .map(|i| 1.0 - next.row(i).dot(&rotation.row(i)).abs())
            .fold(0.0f64, f64::max);
        trace.push(delta);
        rotation = next;
        if delta < tol {
            converged_at = Some(iter + 1);
            break;
        }
    }
    let iterations = match converged_at {
        Some(it) => it,
        None => {
            let tail = trace.len().saturating_sub(8);
            return Err(IcaError::NotConverged {
                iterations: max_iter,
                trace: trace[tail..].to_vec(),
            });
        }
    };

    let mixing = dewhiten.dot(&rotation.t());
    Ok(UnmixingModel {
        whitener,
        rotation,
        mixing,
        channel_means: means,
        flagged_eog: BTreeSet::new(),
        iterations,
    })
}

/// Flags every component whose time course correlates with the EOG channel
/// above `threshold` in absolute value.
pub fn flag_eog_components(
    model: &UnmixingModel,
    recording: &RawRecording,
    eog_channel_index: usize,
    threshold: f64,
) -> Result<BTreeSet<usize>, IcaError> {
    if recording.n_samples() == 0 {
        return Err(IcaError::Empty);
    }
    if eog_channel_index >= recording.n_channels() {
        return Err(IcaError::BadEogIndex(eog_channel_index));
    }
    let comps = model.components(recording.eeg())?;
    let eog: Vec<f64> = recording
        .samples
        .row(eog_channel_index)
        .iter()
        .copied()
        .collect();
    let mut flags = BTreeSet::new();
    for (i, row) in comps.rows().into_iter().enumerate() {
        let r = pearson(row.as_slice().expect("contiguous"), &eog);
        if r.abs() > threshold {
            flags.insert(i);
        }
    }
    Ok(flags)
}

/// Default |correlation| threshold for ocular flagging.
pub const EOG_FLAG_THRESHOLD: f64 = 0.7;

/// Builds `C = A_zeroed · W`, zeroing the flagged components' mixing columns.
pub fn correction_matrix(model: &UnmixingModel) -> CorrectionMatrix {
    let mut mixing = model.mixing.clone();
    for &k in &model.flagged_eog {
        mixing.column_mut(k).fill(0.0);
    }
    CorrectionMatrix {
        matrix: mixing.dot(&model.unmixing()),
    }
}

/// Convenience: fit, flag against the recording's EOG channel, and collapse
/// into the correction matrix.
pub fn fit_correction(
    recording: &RawRecording,
    n_components: usize,
    max_iter: usize,
    tol: f64,
    seed: u64,
    threshold: f64,
) -> Result<(UnmixingModel, CorrectionMatrix), IcaError> {
    let mut model = fit_ica(recording, n_components, max_iter, tol, seed)?;
    model.flagged_eog = flag_eog_components(&model, recording, EOG_CHANNEL, threshold)?;
    let correction = correction_matrix(&model);
    Ok((model, correction))
}

fn center_rows(x: &ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = x.to_owned();
    for mut row in out.rows_mut() {
        let m = row.mean().unwrap_or(0.0);
        row.mapv_inplace(|v| v - m);
    }
    out
}

/// Eigendecomposition of a symmetric matrix, eigenvalues descending,
/// eigenvectors as columns.
fn sym_eig_desc(a: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = a.nrows();
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| a[[i, j]]);
    let eig = nalgebra::SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap());
    let vals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = Array2::from_shape_fn((n, n), |(r, c)| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

/// `(M·Mᵀ)^{-1/2} · M` — rows become orthonormal.
fn sym_orthonormalize(m: &Array2<f64>) -> Array2<f64> {
    let mmt = m.dot(&m.t());
    let (vals, vecs) = sym_eig_desc(&mmt);
    let n = m.nrows();
    let mut inv_sqrt = Array2::<f64>::zeros((n, n));
    for k in 0..n {
        let lam = vals[k].max(f64::MIN_POSITIVE);
        let s = 1.0 / lam.sqrt();
        for i in 0..n {
            for j in 0..n {
                inv_sqrt[[i, j]] += vecs[[i, k]] * s * vecs[[j, k]];
            }
        }
    }
    inv_sqrt.dot(m)
}

pub(crate) fn pearson(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        let dx = x - ma;
        let dy = y - mb;
        num += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    if va <= 0.0 || vb <= 0.0 {
        0.0
    } else {
        num / (va * vb).sqrt()
    }
}

#[cfg(test)]
mod tests;

//! Model evaluation: chronological cross-validation with seed averaging,
//! Kruskal-Wallis comparisons, and the 8-choose-4 mental-task ranking.

pub mod stats;

pub use stats::{kruskal_wallis, pearson, StatsError};

use crate::features::{self, ElectrodeGrid, FeatureTensor};
use crate::ica::CorrectionMatrix;
use crate::network::{self, Architecture, TrainConfig, TrainItem};
use crate::seeds;
use crate::signal::RawRecording;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("need k >= 2 folds, got {0}")]
    BadK(usize),
    #[error("dataset of {got} examples cannot fill {k} folds")]
    TooSmall { got: usize, k: usize },
    #[error("pool needs at least 4 tasks, got {0}")]
    TooFewTasks(usize),
    #[error("task `{0}` has no examples in the pool")]
    MissingTask(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Network(#[from] crate::network::NetworkError),
    #[error(transparent)]
    Feature(#[from] crate::features::FeatureError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExampleOrigin {
    Video,
    Game,
}

impl ExampleOrigin {
    pub fn as_u8(self) -> u8 {
        match self {
            ExampleOrigin::Video => 0,
            ExampleOrigin::Game => 1,
        }
    }

    pub fn from_u8(v: u8) -> Option<ExampleOrigin> {
        match v {
            0 => Some(ExampleOrigin::Video),
            1 => Some(ExampleOrigin::Game),
            _ => None,
        }
    }
}

/// One labeled feature tensor in f32 storage.
#[derive(Debug, Clone)]
pub struct Example {
    pub values: Vec<f32>,
    pub label: u8,
    pub timestamp_s: f64,
    pub origin: ExampleOrigin,
}

impl Example {
    pub fn from_tensor(
        tensor: &FeatureTensor,
        label: u8,
        origin: ExampleOrigin,
    ) -> Example {
        Example {
            values: tensor.to_f32(),
            label,
            timestamp_s: tensor.origin_time_s,
            origin,
        }
    }
}

/// Ordered examples (timestamps non-decreasing) plus the label legend.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub examples: Vec<Example>,
    pub task_names: Vec<String>,
}

impl Dataset {
    pub fn new(task_names: Vec<String>) -> Dataset {
        Dataset {
            examples: Vec::new(),
            task_names,
        }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn train_items(&self) -> Vec<TrainItem<'_>> {
        self.examples
            .iter()
            .map(|e| TrainItem {
                values: &e.values,
                label: e.label,
            })
            .collect()
    }

    pub fn count_label(&self, label: u8) -> usize {
        self.examples.iter().filter(|e| e.label == label).count()
    }

    /// Keeps only the given labels, remapped to 0..len in the given order.
    pub fn restricted_to(&self, labels: &[u8]) -> Dataset {
        let remap: std::collections::HashMap<u8, u8> = labels
            .iter()
            .enumerate()
            .map(|(new, &old)| (old, new as u8))
            .collect();
        Dataset {
            examples: self
                .examples
                .iter()
                .filter_map(|e| {
                    remap.get(&e.label).map(|&new| Example {
                        label: new,
                        ..e.clone()
                    })
                })
                .collect(),
            task_names: labels
                .iter()
                .map(|&l| self.task_names[l as usize].clone())
                .collect(),
        }
    }

    /// Copy with labels shuffled deterministically (chance-floor control).
    pub fn label_shuffled(&self, seed: u64) -> Dataset {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut labels: Vec<u8> = self.examples.iter().map(|e| e.label).collect();
        labels.shuffle(&mut rng);
        let mut out = self.clone();
        for (e, l) in out.examples.iter_mut().zip(labels) {
            e.label = l;
        }
        out
    }
}

/// Streams a labeled recording into a dataset; each tensor is labeled by the
/// interval containing its chunk-start sample. Chunks starting outside any
/// interval are skipped.
pub fn dataset_from_recording(
    recording: &RawRecording,
    grid: &ElectrodeGrid,
    correction: &CorrectionMatrix,
    origin: ExampleOrigin,
) -> Result<Dataset, EvalError> {
    let tensors = features::stream(recording, grid, correction)?;
    let mut ds = Dataset::new(recording.task_names.clone());
    let fs = recording.sample_rate_hz as f64;
    for tensor in tensors {
        let start = (tensor.origin_time_s * fs).round() as usize;
        if let Some(label) = recording.label_at(start) {
            ds.examples.push(Example::from_tensor(&tensor, label, origin));
        }
    }
    Ok(ds)
}

/// One example per interval, for pools recorded as short fixed segments.
/// Segments shorter than a chunk are zero-padded to 600 samples so the one
/// feature pipeline serves both the 1.2 s stream and 1 s instructed segments.
pub fn segment_examples(
    recording: &RawRecording,
    grid: &ElectrodeGrid,
    correction: &CorrectionMatrix,
) -> Result<Dataset, EvalError> {
    grid.check_channel_order(&recording.channel_names)?;
    let mut ds = Dataset::new(recording.task_names.clone());
    let fs = recording.sample_rate_hz as f64;
    let chunk_len = features::welch::CHUNK_SAMPLES;
    for iv in &recording.intervals {
        let take = (iv.end - iv.start).min(chunk_len);
        let mut chunk = ndarray::Array2::<f64>::zeros((grid.n_channels(), chunk_len));
        chunk
            .slice_mut(ndarray::s![.., ..take])
            .assign(&recording.samples.slice(ndarray::s![..grid.n_channels(), iv.start..iv.start + take]));
        let mut tensor = features::chunk_tensor(chunk.view(), grid, correction)?;
        tensor.origin_time_s = iv.start as f64 / fs;
        ds.examples
            .push(Example::from_tensor(&tensor, iv.label, ExampleOrigin::Video));
    }
    Ok(ds)
}

/// Chronological k-fold split: test folds are contiguous index blocks of
/// near-equal size, the remainder spread over the earliest folds.
pub fn chronological_folds(n: usize, k: usize) -> Result<Vec<std::ops::Range<usize>>, EvalError> {
    if k < 2 {
        return Err(EvalError::BadK(k));
    }
    if n < k {
        return Err(EvalError::TooSmall { got: n, k });
    }
    let base = n / k;
    let remainder = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < remainder);
        folds.push(start..start + size);
        start += size;
    }
    Ok(folds)
}

/// Per-fold × per-seed test accuracies with their aggregate.
#[derive(Debug, Clone)]
pub struct CvResult {
    /// `[k][n_seeds]`.
    pub fold_accuracies: Vec<Vec<f64>>,
    pub mean: f64,
    pub std: f64,
    pub warnings: Vec<String>,
}

impl CvResult {
    pub fn samples(&self) -> Vec<f64> {
        self.fold_accuracies.iter().flatten().copied().collect()
    }
}

/// Trains on each fold's complement `n_seeds` times (fresh init seeds) and
/// reports test accuracy per fold × seed. A fold missing one of the classes
/// is kept and recorded as a warning.
pub fn cross_validate(
    dataset: &Dataset,
    arch: &Architecture,
    config: &TrainConfig,
    k: usize,
    n_seeds: usize,
) -> Result<CvResult, EvalError> {
    let folds = chronological_folds(dataset.len(), k)?;
    let items = dataset.train_items();

    let mut warnings = Vec::new();
    for (f, fold) in folds.iter().enumerate() {
        for class in 0..arch.n_classes as u8 {
            if !items[fold.clone()].iter().any(|e| e.label == class) {
                warnings.push(format!("fold {f} has no examples of class {class}"));
            }
        }
    }

    let jobs: Vec<(usize, usize)> = (0..k)
        .flat_map(|f| (0..n_seeds).map(move |s| (f, s)))
        .collect();
    let accs: Vec<Result<f64, EvalError>> = jobs
        .par_iter()
        .map(|&(f, s)| {
            let fold = folds[f].clone();
            let train_items: Vec<TrainItem> = items
                .iter()
                .enumerate()
                .filter(|(i, _)| !fold.contains(i))
                .map(|(_, it)| *it)
                .collect();
            let test_items = &items[fold];
            let idx = (f * n_seeds + s) as u64;
            let init_seed = seeds::derive_indexed(config.shuffle_seed, seeds::stage::INIT, idx);
            let mut cfg = config.clone();
            cfg.shuffle_seed =
                seeds::derive_indexed(config.shuffle_seed, seeds::stage::SHUFFLE, idx);
            let start = network::init(arch, init_seed);
            let (trained, _) = network::train(&start, &train_items, &cfg)?;
            Ok(network::accuracy(&trained, test_items))
        })
        .collect();

    let mut fold_accuracies = vec![vec![0.0; n_seeds]; k];
    for ((f, s), acc) in jobs.into_iter().zip(accs) {
        fold_accuracies[f][s] = acc?;
    }

    let flat: Vec<f64> = fold_accuracies.iter().flatten().copied().collect();
    let mean = flat.iter().sum::<f64>() / flat.len() as f64;
    let var = if flat.len() > 1 {
        flat.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (flat.len() - 1) as f64
    } else {
        0.0
    };
    Ok(CvResult {
        fold_accuracies,
        mean,
        std: var.sqrt(),
        warnings,
    })
}

/// One row of the task-combination ranking.
#[derive(Debug, Clone)]
pub struct ComboRow {
    /// The four task names, in pool label order.
    pub tasks: Vec<String>,
    pub mean_ta: f64,
    /// fold × seed accuracy samples from cross-validation.
    pub samples: Vec<f64>,
    /// Number of other combinations significantly outperformed.
    pub n_sig_diff: usize,
}

/// All C(8,4) = 70 rows, sorted by mean test accuracy descending.
#[derive(Debug, Clone)]
pub struct ComboRanking {
    pub rows: Vec<ComboRow>,
    pub alpha: f64,
    pub bonferroni_divisor: usize,
}

/// Evaluates every 4-task subset of the pool with chronological CV, then
/// compares each pair of combinations with Kruskal-Wallis on the fold × seed
/// accuracy samples, Bonferroni-corrected over all C(70,2) pairwise tests.
/// A combination counts another as significantly outperformed when its mean
/// is higher and the corrected p-value clears `alpha`.
pub fn rank_combinations(
    pool: &Dataset,
    arch: &Architecture,
    config: &TrainConfig,
    k: usize,
    n_seeds: usize,
    alpha: f64,
) -> Result<ComboRanking, EvalError> {
    let n_tasks = pool.task_names.len();
    if n_tasks < 4 {
        return Err(EvalError::TooFewTasks(n_tasks));
    }
    for (label, name) in pool.task_names.iter().enumerate() {
        if pool.count_label(label as u8) == 0 {
            return Err(EvalError::MissingTask(name.clone()));
        }
    }

    let combos = choose_four(n_tasks);
    let evaluated: Vec<Result<ComboRow, EvalError>> = combos
        .par_iter()
        .map(|quad| {
            let restricted = pool.restricted_to(quad);
            let cv = cross_validate(&restricted, arch, config, k, n_seeds)?;
            Ok(ComboRow {
                tasks: restricted.task_names.clone(),
                mean_ta: cv.mean,
                samples: cv.samples(),
                n_sig_diff: 0,
            })
        })
        .collect();
    let mut rows: Vec<ComboRow> = evaluated.into_iter().collect::<Result<_, _>>()?;

    let n_pairs = rows.len() * (rows.len() - 1) / 2;
    for i in 0..rows.len() {
        for j in (i + 1)..rows.len() {
            let (_, p) = kruskal_wallis(&[rows[i].samples.clone(), rows[j].samples.clone()])?;
            let corrected = (p * n_pairs as f64).min(1.0);
            if corrected < alpha {
                if rows[i].mean_ta > rows[j].mean_ta {
                    rows[i].n_sig_diff += 1;
                } else if rows[j].mean_ta > rows[i].mean_ta {
                    rows[j].n_sig_diff += 1;
                }
            }
        }
    }

    rows.sort_by(|a, b| {
        b.mean_ta
            .partial_cmp(&a.mean_ta)
            .unwrap()
            .then_with(|| a.tasks.join(",").cmp(&b.tasks.join(",")))
    });
    Ok(ComboRanking {
        rows,
        alpha,
        bonferroni_divisor: n_pairs,
    })
}

/// Lexicographic 4-element subsets of `0..n` as label quadruples.
fn choose_four(n: usize) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    for a in 0..n {
        for b in (a + 1)..n {
            for c in (b + 1)..n {
                for d in (c + 1)..n {
                    out.push(vec![a as u8, b as u8, c as u8, d as u8]);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests;

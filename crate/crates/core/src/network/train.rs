//! Mini-batch SGD with epoch shuffling, global gradient-norm clipping, and
//! early stopping on a chronological holdout tail.

use super::{loss_and_gradients_prepped, prep_input_f64, ModelParams, NetworkError};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Borrowed training example: flat f32 tensor storage plus class label.
#[derive(Debug, Clone, Copy)]
pub struct TrainItem<'a> {
    pub values: &'a [f32],
    pub label: u8,
}

/// SGD hyperparameters. `max_examples` caps any training set to the most
/// recent examples; `patience = 0` disables early stopping.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub shuffle_seed: u64,
    pub patience: usize,
    /// Chronological tail held out for early stopping.
    pub holdout_fraction: f64,
    pub max_examples: usize,
    /// Global L2 gradient clip; uniform [−1,1] init starts far into softmax
    /// saturation and unclipped steps diverge.
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            batch_size: 32,
            max_epochs: 50,
            shuffle_seed: 0,
            patience: 5,
            holdout_fraction: 0.2,
            max_examples: 2000,
            clip_norm: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub holdout_accuracy: Option<f64>,
}

/// Trains from `start` on `data`, returning the selected parameters and the
/// per-epoch history. The dataset is truncated to the most recent
/// `max_examples` first; when a holdout exists, the best-on-holdout snapshot
/// is returned, otherwise the final parameters.
pub fn train(
    start: &ModelParams,
    data: &[TrainItem<'_>],
    config: &TrainConfig,
) -> Result<(ModelParams, Vec<EpochStats>), NetworkError> {
    if data.is_empty() {
        return Err(NetworkError::EmptyDataset);
    }
    let skip = data.len().saturating_sub(config.max_examples);
    let data = &data[skip..];

    let holdout_len = if config.patience > 0 {
        ((data.len() as f64 * config.holdout_fraction).ceil() as usize).min(data.len() - 1)
    } else {
        0
    };
    let (train_set, holdout) = data.split_at(data.len() - holdout_len);

    // Standardize once; training revisits every example each epoch.
    let arch = &start.arch;
    let prepped: Vec<(Vec<f64>, u8)> = train_set
        .iter()
        .map(|item| {
            let mut v = Vec::with_capacity(item.values.len());
            prep_input_f64(arch, item.values.iter().map(|&x| x as f64), &mut v);
            (v, item.label)
        })
        .collect();

    let mut params = start.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(config.shuffle_seed);
    let mut order: Vec<usize> = (0..prepped.len()).collect();
    let mut history = Vec::new();
    let mut best: Option<(f64, ModelParams, usize)> = None;

    for epoch in 0..config.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut n_batches = 0usize;
        for (batch_idx, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<(&[f64], u8)> = chunk
                .iter()
                .map(|&i| (prepped[i].0.as_slice(), prepped[i].1))
                .collect();
            let (loss, mut grads) = loss_and_gradients_prepped(&params, &batch)?;
            if !loss.is_finite() {
                return Err(NetworkError::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                });
            }
            clip_global_norm(&mut grads, config.clip_norm);
            for (p, g) in params.flat_mut().iter_mut().zip(&grads) {
                *p -= config.learning_rate * g;
            }
            epoch_loss += loss;
            n_batches += 1;
        }

        let holdout_accuracy = if holdout.is_empty() {
            None
        } else {
            Some(accuracy(&params, holdout))
        };
        history.push(EpochStats {
            epoch,
            train_loss: epoch_loss / n_batches.max(1) as f64,
            holdout_accuracy,
        });

        if let Some(acc) = holdout_accuracy {
            let improved = match &best {
                None => true,
                Some((best_acc, _, _)) => acc > *best_acc,
            };
            if improved {
                best = Some((acc, params.clone(), epoch));
            } else if let Some((_, _, best_epoch)) = &best {
                if epoch - best_epoch >= config.patience {
                    break;
                }
            }
        }
    }

    let final_params = match best {
        Some((_, p, _)) => p,
        None => params,
    };
    Ok((final_params, history))
}

/// Fraction of items whose predicted label matches.
pub fn accuracy(params: &ModelParams, items: &[TrainItem<'_>]) -> f64 {
    if items.is_empty() {
        return 0.0;
    }
    let hits = items
        .iter()
        .filter(|item| {
            super::forward_f32(params, item.values)
                .map(|p| p.label == item.label)
                .unwrap_or(false)
        })
        .count();
    hits as f64 / items.len() as f64
}

fn clip_global_norm(grads: &mut [f64], max_norm: f64) {
    if max_norm <= 0.0 {
        return;
    }
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            *g *= scale;
        }
    }
}

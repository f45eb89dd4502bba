//! The SmallNet architecture family: one (or two) convolutional layers over
//! the 7×11 electrode plane with the 129 frequencies as input channels —
//! or a true 3D convolution over (frequency, row, col) — followed by
//! fully-connected layers and a 4-way softmax.
//!
//! Parameters live in a single flat `f64` vector addressable by global index,
//! which makes finite-difference gradient checking and serialization exact.
//! Initialization is i.i.d. uniform on [−1, 1]. That choice is deliberately
//! kept despite being unusually wide; training copes through input
//! standardization and global gradient-norm clipping, and evaluation averages
//! over several init seeds because individual runs can be unstable.

mod layers;
mod train;

pub use layers::Layer;
pub use train::{accuracy, train, EpochStats, TrainConfig, TrainItem};

use crate::features::FeatureTensor;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("input tensor shape {got:?} does not match architecture input {want:?}")]
    ShapeMismatch {
        got: (usize, usize, usize),
        want: (usize, usize, usize),
    },
    #[error("label {0} outside 0..{1}")]
    BadLabel(u8, usize),
    #[error("empty batch")]
    EmptyBatch,
    #[error("empty training set")]
    EmptyDataset,
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("flat parameter vector has {got} entries, architecture needs {want}")]
    ParamCount { got: usize, want: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArchVariant {
    SmallNet,
    SmallNetPlus1Cl,
    SmallNetPlus1Fc,
    SmallNet3d,
}

impl ArchVariant {
    pub const ALL: [ArchVariant; 4] = [
        ArchVariant::SmallNet,
        ArchVariant::SmallNetPlus1Cl,
        ArchVariant::SmallNetPlus1Fc,
        ArchVariant::SmallNet3d,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ArchVariant::SmallNet => "smallnet",
            ArchVariant::SmallNetPlus1Cl => "smallnet+1cl",
            ArchVariant::SmallNetPlus1Fc => "smallnet+1fc",
            ArchVariant::SmallNet3d => "3d-smallnet",
        }
    }

    pub fn parse(s: &str) -> Option<ArchVariant> {
        match s.to_ascii_lowercase().as_str() {
            "smallnet" => Some(ArchVariant::SmallNet),
            "smallnet+1cl" => Some(ArchVariant::SmallNetPlus1Cl),
            "smallnet+1fc" => Some(ArchVariant::SmallNetPlus1Fc),
            "3d-smallnet" | "smallnet3d" => Some(ArchVariant::SmallNet3d),
            _ => None,
        }
    }
}

/// Geometry of one variant. All fields are config-overridable; defaults are
/// 3×3 kernels with 32 maps, FC width 128, and a 5×3×3 kernel with 16 maps
/// for the 3D variant.
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    pub variant: ArchVariant,
    pub input_shape: (usize, usize, usize),
    pub conv_maps: usize,
    pub conv_kernel: (usize, usize),
    pub conv3d_maps: usize,
    pub conv3d_kernel: (usize, usize, usize),
    pub fc_width: usize,
    pub n_classes: usize,
    /// Standardize each input tensor to zero mean / unit variance before the
    /// first layer. Class information is carried by relative band power, so
    /// this only removes the arbitrary overall µV² scale.
    pub input_norm: bool,
}

impl Architecture {
    pub fn new(variant: ArchVariant) -> Architecture {
        Architecture {
            variant,
            input_shape: (
                crate::features::N_BINS,
                crate::features::GRID_ROWS,
                crate::features::GRID_COLS,
            ),
            conv_maps: 32,
            conv_kernel: (3, 3),
            conv3d_maps: 16,
            conv3d_kernel: (5, 3, 3),
            fc_width: 128,
            n_classes: 4,
            input_norm: true,
        }
    }

    pub fn small_net() -> Architecture {
        Architecture::new(ArchVariant::SmallNet)
    }

    /// The layer stack for this geometry.
    pub fn layers(&self) -> Vec<Layer> {
        let (d, h, w) = self.input_shape;
        let mut stack = Vec::new();
        match self.variant {
            ArchVariant::SmallNet | ArchVariant::SmallNetPlus1Fc => {
                let (kh, kw) = self.conv_kernel;
                stack.push(Layer::Conv2d {
                    in_ch: d,
                    in_h: h,
                    in_w: w,
                    out_ch: self.conv_maps,
                    kh,
                    kw,
                });
            }
            ArchVariant::SmallNetPlus1Cl => {
                let (kh, kw) = self.conv_kernel;
                stack.push(Layer::Conv2d {
                    in_ch: d,
                    in_h: h,
                    in_w: w,
                    out_ch: self.conv_maps,
                    kh,
                    kw,
                });
                stack.push(Layer::Relu {
                    len: self.conv_maps * (h - kh + 1) * (w - kw + 1),
                });
                stack.push(Layer::Conv2d {
                    in_ch: self.conv_maps,
                    in_h: h - kh + 1,
                    in_w: w - kw + 1,
                    out_ch: self.conv_maps,
                    kh,
                    kw,
                });
            }
            ArchVariant::SmallNet3d => {
                let (kd, kh, kw) = self.conv3d_kernel;
                stack.push(Layer::Conv3d {
                    in_d: d,
                    in_h: h,
                    in_w: w,
                    out_ch: self.conv3d_maps,
                    kd,
                    kh,
                    kw,
                });
            }
        }
        let conv_out = stack.last().unwrap().output_len();
        stack.push(Layer::Relu { len: conv_out });
        stack.push(Layer::Dense {
            in_len: conv_out,
            out_len: self.fc_width,
        });
        stack.push(Layer::Relu { len: self.fc_width });
        if self.variant == ArchVariant::SmallNetPlus1Fc {
            stack.push(Layer::Dense {
                in_len: self.fc_width,
                out_len: self.fc_width,
            });
            stack.push(Layer::Relu { len: self.fc_width });
        }
        // Logistic-regression classification layer (softmax applied on top).
        stack.push(Layer::Dense {
            in_len: self.fc_width,
            out_len: self.n_classes,
        });
        stack
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(Layer::param_count).sum()
    }

    fn input_len(&self) -> usize {
        let (d, h, w) = self.input_shape;
        d * h * w
    }
}

/// All weights and biases of one model, flat-addressable.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub arch: Architecture,
    flat: Vec<f64>,
    pub seed: u64,
}

impl ModelParams {
    pub fn from_flat(arch: Architecture, flat: Vec<f64>, seed: u64) -> Result<ModelParams, NetworkError> {
        let want = arch.param_count();
        if flat.len() != want {
            return Err(NetworkError::ParamCount {
                got: flat.len(),
                want,
            });
        }
        Ok(ModelParams { arch, flat, seed })
    }

    pub fn flat(&self) -> &[f64] {
        &self.flat
    }

    pub fn flat_mut(&mut self) -> &mut [f64] {
        &mut self.flat
    }

    pub fn len(&self) -> usize {
        self.flat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }
}

/// Class probabilities for one tensor.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub probabilities: Vec<f64>,
    pub label: u8,
    pub decode_latency_s: f64,
}

/// Every parameter i.i.d. uniform on [−1, 1], deterministic per seed.
pub fn init(arch: &Architecture, seed: u64) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = arch.param_count();
    let flat: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    ModelParams { arch: arch.clone(), flat, seed }
}

/// Standardized (if enabled) flat copy of a tensor's values.
fn prep_input_f64<'a>(arch: &Architecture, values: impl Iterator<Item = f64>, out: &mut Vec<f64>) {
    out.clear();
    out.extend(values);
    if arch.input_norm {
        let n = out.len() as f64;
        let mean = out.iter().sum::<f64>() / n;
        let var = out.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt().max(1e-12);
        for v in out.iter_mut() {
            *v = (*v - mean) / std;
        }
    }
}

/// Log-softmax with the shift trick; finite for arbitrarily large logits.
fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln() + max;
    logits.iter().map(|&l| l - lse).collect()
}

fn argmax(values: &[f64]) -> u8 {
    let mut best = 0usize;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best as u8
}

/// Runs the layer stack over a `[batch × input_len]` matrix, returning every
/// intermediate activation (index 0 is the prepared input; the last entry
/// holds the logits) plus the convolution patch caches for the backward pass.
#[allow(clippy::type_complexity)]
fn forward_acts(
    params: &ModelParams,
    input: ndarray::Array2<f64>,
) -> (Vec<ndarray::Array2<f64>>, Vec<Option<ndarray::Array2<f64>>>) {
    let stack = params.arch.layers();
    let mut acts = Vec::with_capacity(stack.len() + 1);
    let mut caches = Vec::with_capacity(stack.len());
    acts.push(input);
    let mut offset = 0;
    for layer in &stack {
        let count = layer.param_count();
        let (out, cache) =
            layer.forward_cached(&params.flat[offset..offset + count], acts.last().unwrap());
        acts.push(out);
        caches.push(cache);
        offset += count;
    }
    (acts, caches)
}

/// Forward pass: probabilities from one tensor.
pub fn forward(params: &ModelParams, tensor: &FeatureTensor) -> Result<Prediction, NetworkError> {
    if tensor.shape() != params.arch.input_shape {
        return Err(NetworkError::ShapeMismatch {
            got: tensor.shape(),
            want: params.arch.input_shape,
        });
    }
    let mut input = Vec::with_capacity(params.arch.input_len());
    prep_input_f64(&params.arch, tensor.values.iter().copied(), &mut input);
    Ok(predict_prepped(params, input))
}

/// Forward pass on already-flattened f32 storage values.
pub fn forward_f32(params: &ModelParams, values: &[f32]) -> Result<Prediction, NetworkError> {
    if values.len() != params.arch.input_len() {
        return Err(NetworkError::ShapeMismatch {
            got: (values.len(), 1, 1),
            want: params.arch.input_shape,
        });
    }
    let mut input = Vec::with_capacity(values.len());
    prep_input_f64(&params.arch, values.iter().map(|&v| v as f64), &mut input);
    Ok(predict_prepped(params, input))
}

fn predict_prepped(params: &ModelParams, input: Vec<f64>) -> Prediction {
    let n = input.len();
    let row = ndarray::Array2::from_shape_vec((1, n), input).expect("row vector");
    let (acts, _) = forward_acts(params, row);
    let logits: Vec<f64> = acts.last().unwrap().row(0).to_vec();
    let logp = log_softmax(&logits);
    let probabilities: Vec<f64> = logp.iter().map(|&l| l.exp()).collect();
    Prediction {
        label: argmax(&probabilities),
        probabilities,
        decode_latency_s: 0.0,
    }
}

/// Argmax class, ties broken by the lowest index.
pub fn predict_label(params: &ModelParams, tensor: &FeatureTensor) -> Result<u8, NetworkError> {
    forward(params, tensor).map(|p| p.label)
}

/// Mean cross-entropy over the batch plus exact gradients in flat layout.
pub fn loss_and_gradients(
    params: &ModelParams,
    batch: &[(&FeatureTensor, u8)],
) -> Result<(f64, Vec<f64>), NetworkError> {
    if batch.is_empty() {
        return Err(NetworkError::EmptyBatch);
    }
    let mut items = Vec::with_capacity(batch.len());
    let mut scratch = Vec::new();
    for (tensor, label) in batch {
        if tensor.shape() != params.arch.input_shape {
            return Err(NetworkError::ShapeMismatch {
                got: tensor.shape(),
                want: params.arch.input_shape,
            });
        }
        prep_input_f64(&params.arch, tensor.values.iter().copied(), &mut scratch);
        items.push((std::mem::take(&mut scratch), *label));
    }
    let views: Vec<(&[f64], u8)> = items.iter().map(|(v, l)| (v.as_slice(), *l)).collect();
    loss_and_gradients_prepped(params, &views)
}

/// Same as [`loss_and_gradients`] for pre-standardized flat inputs.
pub(crate) fn loss_and_gradients_prepped(
    params: &ModelParams,
    batch: &[(&[f64], u8)],
) -> Result<(f64, Vec<f64>), NetworkError> {
    if batch.is_empty() {
        return Err(NetworkError::EmptyBatch);
    }
    let n_classes = params.arch.n_classes;
    let in_len = params.arch.input_len();
    let b = batch.len();
    for (_, label) in batch {
        if *label as usize >= n_classes {
            return Err(NetworkError::BadLabel(*label, n_classes));
        }
    }

    let mut input = ndarray::Array2::<f64>::zeros((b, in_len));
    for (row, (values, _)) in batch.iter().enumerate() {
        input
            .row_mut(row)
            .as_slice_mut()
            .expect("standard layout")
            .copy_from_slice(values);
    }

    let stack = params.arch.layers();
    let offsets: Vec<usize> = stack
        .iter()
        .scan(0usize, |acc, l| {
            let off = *acc;
            *acc += l.param_count();
            Some(off)
        })
        .collect();

    let (acts, caches) = forward_acts(params, input);
    let logits = acts.last().unwrap();
    let inv_b = 1.0 / b as f64;
    let mut loss = 0.0f64;
    // d(mean CE)/d(logits) = (softmax − onehot)/B, one row per example.
    let mut delta = ndarray::Array2::<f64>::zeros((b, n_classes));
    for (row, (_, label)) in batch.iter().enumerate() {
        let logp = log_softmax(logits.row(row).as_slice().expect("standard layout"));
        loss -= logp[*label as usize] * inv_b;
        for k in 0..n_classes {
            delta[[row, k]] = logp[k].exp() * inv_b;
        }
        delta[[row, *label as usize]] -= inv_b;
    }

    let mut grads = vec![0.0f64; params.len()];
    for (i, layer) in stack.iter().enumerate().rev() {
        let count = layer.param_count();
        let p = &params.flat[offsets[i]..offsets[i] + count];
        let g = &mut grads[offsets[i]..offsets[i] + count];
        delta = layer.backward(p, &acts[i], &caches[i], &delta, g);
    }
    Ok((loss, grads))
}

#[cfg(test)]
mod tests;

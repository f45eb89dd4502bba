//! Layer primitives: valid-mode 2D/3D convolution (im2col + GEMM), rectifier,
//! and dense layers, each with an exact backward pass writing gradients into
//! the same flat layout as the parameters.
//!
//! Activations flow as `[batch × features]` matrices (one contiguous row per
//! example), so each layer costs a couple of GEMMs per mini-batch and the
//! patch matrix built for a convolution's forward pass is reused by its
//! backward pass.

use ndarray::{Array2, ArrayView2};

/// One layer of the network. Shapes are fixed at architecture build time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    /// Input `[in_ch, in_h, in_w]` → output `[out_ch, in_h-kh+1, in_w-kw+1]`.
    Conv2d {
        in_ch: usize,
        in_h: usize,
        in_w: usize,
        out_ch: usize,
        kh: usize,
        kw: usize,
    },
    /// Single-channel 3D input `[in_d, in_h, in_w]` → `[out_ch, od, oh, ow]`.
    Conv3d {
        in_d: usize,
        in_h: usize,
        in_w: usize,
        out_ch: usize,
        kd: usize,
        kh: usize,
        kw: usize,
    },
    Relu {
        len: usize,
    },
    Dense {
        in_len: usize,
        out_len: usize,
    },
}

/// im2col geometry shared by both convolution kinds. 2D convolutions are
/// treated as depth-1 3D ones with `in_ch` kernel planes.
struct PatchPlan {
    krows: usize,
    spatial: usize,
    out_ch: usize,
    /// (source offset in the example's feature row, patch row, column offset)
    /// triples, each describing one contiguous `run_len`-wide copy.
    copies: Vec<(usize, usize, usize)>,
    /// Contiguous run length per copy (output width).
    run_len: usize,
}

impl Layer {
    pub fn param_count(&self) -> usize {
        match *self {
            Layer::Conv2d {
                in_ch,
                out_ch,
                kh,
                kw,
                ..
            } => out_ch * in_ch * kh * kw + out_ch,
            Layer::Conv3d {
                out_ch, kd, kh, kw, ..
            } => out_ch * kd * kh * kw + out_ch,
            Layer::Relu { .. } => 0,
            Layer::Dense { in_len, out_len } => out_len * in_len + out_len,
        }
    }

    pub fn input_len(&self) -> usize {
        match *self {
            Layer::Conv2d {
                in_ch, in_h, in_w, ..
            } => in_ch * in_h * in_w,
            Layer::Conv3d {
                in_d, in_h, in_w, ..
            } => in_d * in_h * in_w,
            Layer::Relu { len } => len,
            Layer::Dense { in_len, .. } => in_len,
        }
    }

    pub fn output_len(&self) -> usize {
        match *self {
            Layer::Conv2d {
                in_h,
                in_w,
                out_ch,
                kh,
                kw,
                ..
            } => out_ch * (in_h - kh + 1) * (in_w - kw + 1),
            Layer::Conv3d {
                in_d,
                in_h,
                in_w,
                out_ch,
                kd,
                kh,
                kw,
            } => out_ch * (in_d - kd + 1) * (in_h - kh + 1) * (in_w - kw + 1),
            Layer::Relu { len } => len,
            Layer::Dense { out_len, .. } => out_len,
        }
    }

    fn patch_plan(&self) -> Option<PatchPlan> {
        // Unify both convolutions as (planes, depth, kd) over an H×W image.
        let (planes, depth, kd, in_h, in_w, out_ch, kh, kw) = match *self {
            Layer::Conv2d {
                in_ch,
                in_h,
                in_w,
                out_ch,
                kh,
                kw,
            } => (in_ch, 1, 1, in_h, in_w, out_ch, kh, kw),
            Layer::Conv3d {
                in_d,
                in_h,
                in_w,
                out_ch,
                kd,
                kh,
                kw,
            } => (1, in_d, kd, in_h, in_w, out_ch, kh, kw),
            _ => return None,
        };
        let od = depth - kd + 1;
        let oh = in_h - kh + 1;
        let ow = in_w - kw + 1;
        let spatial = od * oh * ow;
        let krows = planes * kd * kh * kw;
        let hw = in_h * in_w;

        // For patch row (c, d, i, j): source = (c·depth + z + d)·hw + (y+i)·w + (x+j),
        // destination column = (z·oh + y)·ow + x. x runs contiguously in both.
        let mut copies = Vec::with_capacity(krows * od * oh);
        for c in 0..planes {
            for d in 0..kd {
                for i in 0..kh {
                    for j in 0..kw {
                        let row = ((c * kd + d) * kh + i) * kw + j;
                        for z in 0..od {
                            for y in 0..oh {
                                let src = (c * depth + z + d) * hw + (y + i) * in_w + j;
                                let dst_col = (z * oh + y) * ow;
                                copies.push((src, row, dst_col));
                            }
                        }
                    }
                }
            }
        }
        Some(PatchPlan {
            krows,
            spatial,
            out_ch,
            copies,
            run_len: ow,
        })
    }

    /// Forward pass over a `[batch × input_len]` activation matrix.
    pub fn forward(&self, params: &[f64], input: &Array2<f64>) -> Array2<f64> {
        self.forward_cached(params, input).0
    }

    /// Forward pass that also returns the im2col patch matrix for reuse in
    /// the backward pass (convolutions only).
    pub fn forward_cached(&self, params: &[f64], input: &Array2<f64>) -> (Array2<f64>, Option<Array2<f64>>) {
        debug_assert_eq!(params.len(), self.param_count());
        debug_assert_eq!(input.ncols(), self.input_len());
        let batch = input.nrows();
        match *self {
            Layer::Conv2d { .. } | Layer::Conv3d { .. } => {
                let plan = self.patch_plan().unwrap();
                let col = self.im2col(&plan, input);
                let weights = ArrayView2::from_shape(
                    (plan.out_ch, plan.krows),
                    &params[..plan.out_ch * plan.krows],
                )
                .unwrap();
                let bias = &params[plan.out_ch * plan.krows..];
                let mixed = weights.dot(&col); // [out_ch × batch·spatial]
                let mut out = Array2::zeros((batch, plan.out_ch * plan.spatial));
                {
                    let mixed_slice = mixed.as_slice().unwrap();
                    let out_slice = out.as_slice_mut().unwrap();
                    let out_row_len = plan.out_ch * plan.spatial;
                    for m in 0..plan.out_ch {
                        let b0 = bias[m];
                        let mrow = &mixed_slice[m * batch * plan.spatial..(m + 1) * batch * plan.spatial];
                        for b in 0..batch {
                            let dst =
                                &mut out_slice[b * out_row_len + m * plan.spatial..b * out_row_len + (m + 1) * plan.spatial];
                            let src = &mrow[b * plan.spatial..(b + 1) * plan.spatial];
                            for (d, s) in dst.iter_mut().zip(src) {
                                *d = s + b0;
                            }
                        }
                    }
                }
                (out, Some(col))
            }
            Layer::Relu { .. } => (input.mapv(|v| v.max(0.0)), None),
            Layer::Dense { in_len, out_len } => {
                let weights =
                    ArrayView2::from_shape((out_len, in_len), &params[..out_len * in_len]).unwrap();
                let bias = &params[out_len * in_len..];
                let mut out = input.dot(&weights.t()); // [batch × out_len]
                for mut row in out.rows_mut() {
                    for (v, b) in row.iter_mut().zip(bias) {
                        *v += b;
                    }
                }
                (out, None)
            }
        }
    }

    /// Accumulates parameter gradients into `grad_params` and returns the
    /// gradient with respect to the input matrix. `cache` must be the patch
    /// matrix returned by [`Layer::forward_cached`] on the same input.
    pub fn backward(
        &self,
        params: &[f64],
        input: &Array2<f64>,
        cache: &Option<Array2<f64>>,
        grad_out: &Array2<f64>,
        grad_params: &mut [f64],
    ) -> Array2<f64> {
        debug_assert_eq!(grad_out.ncols(), self.output_len());
        let batch = input.nrows();
        match *self {
            Layer::Conv2d { .. } | Layer::Conv3d { .. } => {
                let plan = self.patch_plan().unwrap();
                let owned_col;
                let col = match cache {
                    Some(c) => c,
                    None => {
                        owned_col = self.im2col(&plan, input);
                        &owned_col
                    }
                };
                let weights = ArrayView2::from_shape(
                    (plan.out_ch, plan.krows),
                    &params[..plan.out_ch * plan.krows],
                )
                .unwrap();

                // Re-layout [batch × out_len] → [out_ch × batch·spatial].
                let mut dout = Array2::zeros((plan.out_ch, batch * plan.spatial));
                {
                    let go = grad_out.as_slice().unwrap();
                    let ds = dout.as_slice_mut().unwrap();
                    let out_row_len = plan.out_ch * plan.spatial;
                    for m in 0..plan.out_ch {
                        let mrow = &mut ds[m * batch * plan.spatial..(m + 1) * batch * plan.spatial];
                        for b in 0..batch {
                            mrow[b * plan.spatial..(b + 1) * plan.spatial].copy_from_slice(
                                &go[b * out_row_len + m * plan.spatial
                                    ..b * out_row_len + (m + 1) * plan.spatial],
                            );
                        }
                    }
                }

                let dw = dout.dot(&col.t()); // [out_ch × krows]
                for m in 0..plan.out_ch {
                    let src = dw.row(m);
                    let dst = &mut grad_params[m * plan.krows..(m + 1) * plan.krows];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += s;
                    }
                    grad_params[plan.out_ch * plan.krows + m] += dout.row(m).sum();
                }

                let dcol = weights.t().dot(&dout); // [krows × batch·spatial]
                self.col2im(&plan, &dcol, batch)
            }
            Layer::Relu { .. } => {
                let mut dx = grad_out.clone();
                let xs = input.as_slice().unwrap();
                let ds = dx.as_slice_mut().unwrap();
                for (d, x) in ds.iter_mut().zip(xs) {
                    if *x <= 0.0 {
                        *d = 0.0;
                    }
                }
                dx
            }
            Layer::Dense { in_len, out_len } => {
                let weights =
                    ArrayView2::from_shape((out_len, in_len), &params[..out_len * in_len]).unwrap();
                let dw = grad_out.t().dot(input); // [out_len × in_len]
                {
                    let dst = &mut grad_params[..out_len * in_len];
                    let src = dw.as_slice().unwrap();
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += s;
                    }
                }
                for o in 0..out_len {
                    grad_params[out_len * in_len + o] += grad_out.column(o).sum();
                }
                grad_out.dot(&weights) // [batch × in_len]
            }
        }
    }

    /// Patch matrix `[krows × batch·spatial]`; each example occupies a
    /// contiguous block of `spatial` columns.
    fn im2col(&self, plan: &PatchPlan, input: &Array2<f64>) -> Array2<f64> {
        let batch = input.nrows();
        let mut col = Array2::zeros((plan.krows, batch * plan.spatial));
        let xs = input.as_slice().unwrap();
        let in_len = input.ncols();
        let cs = col.as_slice_mut().unwrap();
        let bs = batch * plan.spatial;
        for b in 0..batch {
            let example = &xs[b * in_len..(b + 1) * in_len];
            for &(src, row, dst_col) in &plan.copies {
                let dst = row * bs + b * plan.spatial + dst_col;
                cs[dst..dst + plan.run_len].copy_from_slice(&example[src..src + plan.run_len]);
            }
        }
        col
    }

    /// Scatter-adds a `[krows × batch·spatial]` gradient back to input shape.
    fn col2im(&self, plan: &PatchPlan, dcol: &Array2<f64>, batch: usize) -> Array2<f64> {
        let in_len = self.input_len();
        let mut dx = Array2::zeros((batch, in_len));
        let ds = dcol.as_slice().unwrap();
        let xs = dx.as_slice_mut().unwrap();
        let bs = batch * plan.spatial;
        for b in 0..batch {
            let example = &mut xs[b * in_len..(b + 1) * in_len];
            for &(src, row, dst_col) in &plan.copies {
                let from = row * bs + b * plan.spatial + dst_col;
                for (x, d) in example[src..src + plan.run_len]
                    .iter_mut()
                    .zip(&ds[from..from + plan.run_len])
                {
                    *x += d;
                }
            }
        }
        dx
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{gemm, MatRef, Rng, Tensor};

/// Convolution kernels are always 3×3, stride 1, zero 'same' padding.
pub const KERNEL: usize = 3;

/// Input channel count from which convolutions run as nine shifted GEMMs
/// over a padded copy of the input instead of through an im2col matrix.
const SHIFTED_MIN_CHANNELS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolRounding {
    Floor,
    Ceil,
}

impl PoolRounding {
    pub fn pooled(self, n: usize) -> usize {
        match self {
            PoolRounding::Floor => n / 2,
            PoolRounding::Ceil => n.div_ceil(2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Conv2d,
    Maxpool2d,
    Dense,
    Dropout,
    Flatten,
    Relu,
    Softmax,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerOp {
    /// `kernel` is `[3, 3, in_channels, out_channels]`, `bias` is `[out_channels]`.
    Conv2d {
        kernel: Tensor,
        bias: Tensor,
    },
    /// 2×2 window, stride 2.
    MaxPool2d {
        rounding: PoolRounding,
    },
    /// `kernel` is `[inputs, outputs]`, `bias` is `[outputs]`.
    Dense {
        kernel: Tensor,
        bias: Tensor,
    },
    Dropout {
        rate: f64,
    },
    Flatten,
    Relu,
    Softmax,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub name: String,
    pub op: LayerOp,
}

/// Values retained by a train-mode forward pass for the backward pass.
#[derive(Debug, Clone)]
pub(crate) enum LayerCache {
    Conv {
        input: ConvInput,
        input_shape: Vec<usize>,
    },
    Pool {
        argmax: Vec<usize>,
        input_shape: Vec<usize>,
    },
    Dense {
        input: Vec<f64>,
    },
    Dropout {
        mask: Vec<f64>,
    },
    Flatten {
        input_shape: Vec<usize>,
    },
    Relu {
        output: Vec<f64>,
    },
    Softmax {
        output: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
pub(crate) enum ConvInput {
    Patches(Vec<f64>),
    Padded(Vec<f64>),
}

pub(crate) struct LayerGrads {
    pub input: Tensor,
    pub params: Option<(Tensor, Tensor)>,
}

impl Layer {
    pub fn conv2d(name: &str, in_channels: usize, out_channels: usize) -> Self {
        Self {
            name: name.to_string(),
            op: LayerOp::Conv2d {
                kernel: Tensor::zeros(&[KERNEL, KERNEL, in_channels, out_channels]),
                bias: Tensor::zeros(&[out_channels]),
            },
        }
    }

    pub fn dense(name: &str, inputs: usize, outputs: usize) -> Self {
        Self {
            name: name.to_string(),
            op: LayerOp::Dense {
                kernel: Tensor::zeros(&[inputs, outputs]),
                bias: Tensor::zeros(&[outputs]),
            },
        }
    }

    pub fn maxpool(name: &str, rounding: PoolRounding) -> Self {
        Self::simple(name, LayerOp::MaxPool2d { rounding })
    }

    pub fn dropout(name: &str, rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Configuration(format!(
                "dropout rate {rate} outside [0, 1)"
            )));
        }
        Ok(Self::simple(name, LayerOp::Dropout { rate }))
    }

    pub fn simple(name: &str, op: LayerOp) -> Self {
        Self {
            name: name.to_string(),
            op,
        }
    }

    pub fn kind(&self) -> LayerKind {
        match self.op {
            LayerOp::Conv2d { .. } => LayerKind::Conv2d,
            LayerOp::MaxPool2d { .. } => LayerKind::Maxpool2d,
            LayerOp::Dense { .. } => LayerKind::Dense,
            LayerOp::Dropout { .. } => LayerKind::Dropout,
            LayerOp::Flatten => LayerKind::Flatten,
            LayerOp::Relu => LayerKind::Relu,
            LayerOp::Softmax => LayerKind::Softmax,
        }
    }

    pub fn params(&self) -> Option<(&Tensor, &Tensor)> {
        match &self.op {
            LayerOp::Conv2d { kernel, bias } | LayerOp::Dense { kernel, bias } => {
                Some((kernel, bias))
            }
            _ => None,
        }
    }

    pub(crate) fn params_mut(&mut self) -> Option<(&mut Tensor, &mut Tensor)> {
        match &mut self.op {
            LayerOp::Conv2d { kernel, bias } | LayerOp::Dense { kernel, bias } => {
                Some((kernel, bias))
            }
            _ => None,
        }
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let mismatch =
            |expected: &[usize]| Error::dim(format!("layer {}", self.name), expected, input);
        match &self.op {
            LayerOp::Conv2d { kernel, .. } => match *input {
                [h, w, c] if c == kernel.shape()[2] => Ok(vec![h, w, kernel.shape()[3]]),
                _ => Err(mismatch(&[0, 0, kernel.shape()[2]])),
            },
            LayerOp::MaxPool2d { rounding } => match *input {
                [h, w, c] if rounding.pooled(h) > 0 && rounding.pooled(w) > 0 => {
                    Ok(vec![rounding.pooled(h), rounding.pooled(w), c])
                }
                _ => Err(mismatch(&[2, 2, 0])),
            },
            LayerOp::Dense { kernel, .. } => match *input {
                [n] if n == kernel.shape()[0] => Ok(vec![kernel.shape()[1]]),
                _ => Err(mismatch(&[kernel.shape()[0]])),
            },
            LayerOp::Softmax => match *input {
                [n] => Ok(vec![n]),
                _ => Err(mismatch(&[0])),
            },
            LayerOp::Flatten => Ok(vec![input.iter().product()]),
            LayerOp::Dropout { .. } | LayerOp::Relu => Ok(input.to_vec()),
        }
    }

    /// Forward pass for one sample. `rng` is consulted only by dropout in
    /// train mode; `keep` requests a backward cache.
    pub(crate) fn forward(
        &self,
        x: &Tensor,
        train: bool,
        rng: Option<&mut Rng>,
        keep: bool,
    ) -> Result<(Tensor, Option<LayerCache>)> {
        let out_shape = self.output_shape(x.shape())?;
        match &self.op {
            LayerOp::Conv2d { kernel, bias } => {
                let (h, w, cin) = (x.shape()[0], x.shape()[1], x.shape()[2]);
                let (out, input) = if cin >= SHIFTED_MIN_CHANNELS {
                    let padded = pad(x.data(), h, w, cin);
                    (
                        conv_shifted(&padded, h, w, kernel, bias),
                        ConvInput::Padded(padded),
                    )
                } else {
                    let patches = im2col(x.data(), h, w, cin);
                    (
                        conv_im2col(&patches, h, w, kernel, bias),
                        ConvInput::Patches(patches),
                    )
                };
                let cache = keep.then(|| LayerCache::Conv {
                    input,
                    input_shape: x.shape().to_vec(),
                });
                Ok((Tensor::from_parts(out_shape, out), cache))
            }
            LayerOp::MaxPool2d { .. } => {
                let (out, argmax) = maxpool(x, &out_shape);
                let cache = keep.then(|| LayerCache::Pool {
                    argmax,
                    input_shape: x.shape().to_vec(),
                });
                Ok((out, cache))
            }
            LayerOp::Dense { kernel, bias } => {
                let outputs = kernel.shape()[1];
                let mut out = bias.data().to_vec();
                gemm(
                    MatRef::row_major(x.data(), 1, x.len()),
                    MatRef::row_major(kernel.data(), x.len(), outputs),
                    &mut out,
                    true,
                );
                let cache = keep.then(|| LayerCache::Dense {
                    input: x.data().to_vec(),
                });
                Ok((Tensor::from_parts(out_shape, out), cache))
            }
            LayerOp::Dropout { rate } => {
                if !train || *rate == 0.0 {
                    let cache = keep.then(|| LayerCache::Dropout {
                        mask: vec![1.0; x.len()],
                    });
                    return Ok((x.clone(), cache));
                }
                let rng = rng.ok_or_else(|| {
                    Error::Configuration(format!(
                        "dropout layer {} needs an Rng in train mode",
                        self.name
                    ))
                })?;
                let scale = 1.0 / (1.0 - rate);
                let mask: Vec<f64> = (0..x.len())
                    .map(|_| if rng.next_f64() < *rate { 0.0 } else { scale })
                    .collect();
                let out = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
                Ok((
                    Tensor::from_parts(out_shape, out),
                    keep.then_some(LayerCache::Dropout { mask }),
                ))
            }
            LayerOp::Flatten => Ok((
                Tensor::from_parts(out_shape, x.data().to_vec()),
                keep.then(|| LayerCache::Flatten {
                    input_shape: x.shape().to_vec(),
                }),
            )),
            LayerOp::Relu => {
                let out: Vec<f64> = x.data().iter().map(|&v| v.max(0.0)).collect();
                let cache = keep.then(|| LayerCache::Relu {
                    output: out.clone(),
                });
                Ok((Tensor::from_parts(out_shape, out), cache))
            }
            LayerOp::Softmax => {
                let out = softmax(x.data());
                let cache = keep.then(|| LayerCache::Softmax {
                    output: out.clone(),
                });
                Ok((Tensor::from_parts(out_shape, out), cache))
            }
        }
    }

    pub(crate) fn backward(&self, cache: &LayerCache, grad: &Tensor) -> Result<LayerGrads> {
        self.backward_with(cache, grad, true)
    }

    /// With `want_input == false` a convolution skips its input gradient and
    /// reports zeros instead.
    pub(crate) fn backward_with(
        &self,
        cache: &LayerCache,
        grad: &Tensor,
        want_input: bool,
    ) -> Result<LayerGrads> {
        self.backward_into(cache, grad, want_input, None)
    }

    /// Like [`Layer::backward_with`], but parameter gradients are added into
    /// `sink` (kernel, bias) when given instead of being returned.
    pub(crate) fn backward_into(
        &self,
        cache: &LayerCache,
        grad: &Tensor,
        want_input: bool,
        sink: Option<(&mut Tensor, &mut Tensor)>,
    ) -> Result<LayerGrads> {
        let stale = || Error::State(format!("cache does not belong to layer {}", self.name));
        match (&self.op, cache) {
            (LayerOp::Conv2d { kernel, .. }, LayerCache::Conv { input, input_shape }) => {
                let (h, w) = (input_shape[0], input_shape[1]);
                let cout = kernel.shape()[3];
                check_grad_len(grad, h * w * cout, &self.name)?;
                let mut sink = ParamSink::new(sink, kernel.shape(), &[cout])?;
                let (dkernel, dbias) = sink.slices();
                for row in grad.data().chunks_exact(cout) {
                    for (b, g) in dbias.iter_mut().zip(row) {
                        *b += g;
                    }
                }
                let dinput = match input {
                    ConvInput::Patches(patches) => conv_im2col_backward(
                        patches,
                        h,
                        w,
                        kernel,
                        grad.data(),
                        want_input,
                        dkernel,
                    ),
                    ConvInput::Padded(padded) => conv_shifted_backward(
                        padded,
                        h,
                        w,
                        kernel,
                        grad.data(),
                        want_input,
                        dkernel,
                    ),
                };
                Ok(LayerGrads {
                    input: Tensor::from_parts(input_shape.clone(), dinput),
                    params: sink.finish(),
                })
            }
            (
                LayerOp::MaxPool2d { .. },
                LayerCache::Pool {
                    argmax,
                    input_shape,
                },
            ) => {
                check_grad_len(grad, argmax.len(), &self.name)?;
                let mut dinput = vec![0.0; input_shape.iter().product()];
                for (&src, g) in argmax.iter().zip(grad.data()) {
                    dinput[src] += g;
                }
                Ok(LayerGrads {
                    input: Tensor::from_parts(input_shape.clone(), dinput),
                    params: None,
                })
            }
            (LayerOp::Dense { kernel, .. }, LayerCache::Dense { input }) => {
                let (n, m) = (kernel.shape()[0], kernel.shape()[1]);
                check_grad_len(grad, m, &self.name)?;
                let mut sink = ParamSink::new(sink, kernel.shape(), &[m])?;
                let (dkernel, dbias) = sink.slices();
                gemm(
                    MatRef::row_major(input, 1, n).t(),
                    MatRef::row_major(grad.data(), 1, m),
                    dkernel,
                    true,
                );
                dbias.iter_mut().zip(grad.data()).for_each(|(b, g)| *b += g);
                let mut dinput = vec![0.0; n];
                gemm(
                    MatRef::row_major(grad.data(), 1, m),
                    MatRef::row_major(kernel.data(), n, m).t(),
                    &mut dinput,
                    false,
                );
                Ok(LayerGrads {
                    input: Tensor::from_parts(vec![n], dinput),
                    params: sink.finish(),
                })
            }
            (LayerOp::Dropout { .. }, LayerCache::Dropout { mask }) => {
                check_grad_len(grad, mask.len(), &self.name)?;
                let d = grad.data().iter().zip(mask).map(|(g, m)| g * m).collect();
                Ok(LayerGrads {
                    input: Tensor::from_parts(grad.shape().to_vec(), d),
                    params: None,
                })
            }
            (LayerOp::Flatten, LayerCache::Flatten { input_shape }) => {
                check_grad_len(grad, input_shape.iter().product(), &self.name)?;
                Ok(LayerGrads {
                    input: Tensor::from_parts(input_shape.clone(), grad.data().to_vec()),
                    params: None,
                })
            }
            (LayerOp::Relu, LayerCache::Relu { output }) => {
                check_grad_len(grad, output.len(), &self.name)?;
                let d = grad
                    .data()
                    .iter()
                    .zip(output)
                    .map(|(&g, &y)| if y > 0.0 { g } else { 0.0 })
                    .collect();
                Ok(LayerGrads {
                    input: Tensor::from_parts(grad.shape().to_vec(), d),
                    params: None,
                })
            }
            (LayerOp::Softmax, LayerCache::Softmax { output }) => {
                check_grad_len(grad, output.len(), &self.name)?;
                let dot: f64 = grad.data().iter().zip(output).map(|(g, s)| g * s).sum();
                let d = grad
                    .data()
                    .iter()
                    .zip(output)
                    .map(|(g, s)| s * (g - dot))
                    .collect();
                Ok(LayerGrads {
                    input: Tensor::from_parts(grad.shape().to_vec(), d),
                    params: None,
                })
            }
            _ => Err(stale()),
        }
    }
}

/// Destination for one layer's parameter gradients: either caller-owned
/// accumulators or fresh zeroed buffers handed back in [`LayerGrads`].
enum ParamSink<'a> {
    Borrowed(&'a mut Tensor, &'a mut Tensor),
    Owned(Tensor, Tensor),
}

impl<'a> ParamSink<'a> {
    fn new(
        sink: Option<(&'a mut Tensor, &'a mut Tensor)>,
        kshape: &[usize],
        bshape: &[usize],
    ) -> Result<Self> {
        match sink {
            Some((k, b)) => {
                if k.shape() != kshape || b.shape() != bshape {
                    return Err(Error::dim("gradient accumulator", kshape, k.shape()));
                }
                Ok(Self::Borrowed(k, b))
            }
            None => Ok(Self::Owned(Tensor::zeros(kshape), Tensor::zeros(bshape))),
        }
    }

    fn slices(&mut self) -> (&mut [f64], &mut [f64]) {
        match self {
            Self::Borrowed(k, b) => (k.data_mut(), b.data_mut()),
            Self::Owned(k, b) => (k.data_mut(), b.data_mut()),
        }
    }

    fn finish(self) -> Option<(Tensor, Tensor)> {
        match self {
            Self::Borrowed(..) => None,
            Self::Owned(k, b) => Some((k, b)),
        }
    }
}

fn check_grad_len(grad: &Tensor, expected: usize, name: &str) -> Result<()> {
    if grad.len() != expected {
        return Err(Error::dim(
            format!("upstream gradient for {name}"),
            grad.shape(),
            &[expected],
        ));
    }
    Ok(())
}

/// Numerically stable softmax (max subtraction).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn conv_im2col(patches: &[f64], h: usize, w: usize, kernel: &Tensor, bias: &Tensor) -> Vec<f64> {
    let cout = kernel.shape()[3];
    let k = KERNEL * KERNEL * kernel.shape()[2];
    let mut out = Vec::with_capacity(h * w * cout);
    for _ in 0..h * w {
        out.extend_from_slice(bias.data());
    }
    gemm(
        MatRef::row_major(patches, h * w, k),
        MatRef::row_major(kernel.data(), k, cout),
        &mut out,
        true,
    );
    out
}

fn conv_im2col_backward(
    patches: &[f64],
    h: usize,
    w: usize,
    kernel: &Tensor,
    grad: &[f64],
    want_input: bool,
    dkernel: &mut [f64],
) -> Vec<f64> {
    let (cin, cout) = (kernel.shape()[2], kernel.shape()[3]);
    let k = KERNEL * KERNEL * cin;
    gemm(
        MatRef::row_major(patches, h * w, k).t(),
        MatRef::row_major(grad, h * w, cout),
        dkernel,
        true,
    );
    if !want_input {
        return vec![0.0; h * w * cin];
    }
    let mut dpatches = vec![0.0; h * w * k];
    gemm(
        MatRef::row_major(grad, h * w, cout),
        MatRef::row_major(kernel.data(), k, cout).t(),
        &mut dpatches,
        false,
    );
    col2im(&dpatches, h, w, cin)
}

/// Copies HWC `x` into a zero border one pixel wide, laid out as
/// `(h + 2) × (w + 2)` pixels plus two trailing zero pixels so every
/// shifted view in [`conv_shifted`] stays in bounds.
fn pad(x: &[f64], h: usize, w: usize, cin: usize) -> Vec<f64> {
    let wp = w + 2;
    let mut padded = vec![0.0; ((h + 2) * wp + 2) * cin];
    for i in 0..h {
        let dst = ((i + 1) * wp + 1) * cin;
        padded[dst..dst + w * cin].copy_from_slice(&x[i * w * cin..(i + 1) * w * cin]);
    }
    padded
}

/// Offset, in padded pixels, of kernel tap `(kh, kw)`.
fn tap_offset(kh: usize, kw: usize, w: usize) -> usize {
    kh * (w + 2) + kw
}

/// Output pixel `(i, j)` lives at row `i * (w + 2) + j` of an
/// `h * (w + 2)`-row result; each tap adds one GEMM over a shifted view of
/// the padded input. The two extra columns per row are discarded.
fn conv_shifted(padded: &[f64], h: usize, w: usize, kernel: &Tensor, bias: &Tensor) -> Vec<f64> {
    let (cin, cout) = (kernel.shape()[2], kernel.shape()[3]);
    let (wp, m) = (w + 2, h * (w + 2));
    let mut wide = Vec::with_capacity(m * cout);
    for _ in 0..m {
        wide.extend_from_slice(bias.data());
    }
    for kh in 0..KERNEL {
        for kw in 0..KERNEL {
            let off = tap_offset(kh, kw, w) * cin;
            let tap = (kh * KERNEL + kw) * cin * cout;
            gemm(
                MatRef::row_major(&padded[off..off + m * cin], m, cin),
                MatRef::row_major(&kernel.data()[tap..tap + cin * cout], cin, cout),
                &mut wide,
                true,
            );
        }
    }
    let mut out = Vec::with_capacity(h * w * cout);
    for i in 0..h {
        out.extend_from_slice(&wide[i * wp * cout..(i * wp + w) * cout]);
    }
    out
}

fn conv_shifted_backward(
    padded: &[f64],
    h: usize,
    w: usize,
    kernel: &Tensor,
    grad: &[f64],
    want_input: bool,
    dkernel: &mut [f64],
) -> Vec<f64> {
    let (cin, cout) = (kernel.shape()[2], kernel.shape()[3]);
    let (wp, m) = (w + 2, h * (w + 2));
    let mut wide = vec![0.0; m * cout];
    for i in 0..h {
        wide[i * wp * cout..(i * wp + w) * cout]
            .copy_from_slice(&grad[i * w * cout..(i + 1) * w * cout]);
    }
    let mut dpadded = if want_input {
        vec![0.0; padded.len()]
    } else {
        Vec::new()
    };
    for kh in 0..KERNEL {
        for kw in 0..KERNEL {
            let off = tap_offset(kh, kw, w) * cin;
            let tap = (kh * KERNEL + kw) * cin * cout;
            gemm(
                MatRef::row_major(&padded[off..off + m * cin], m, cin).t(),
                MatRef::row_major(&wide, m, cout),
                &mut dkernel[tap..tap + cin * cout],
                true,
            );
            if want_input {
                gemm(
                    MatRef::row_major(&wide, m, cout),
                    MatRef::row_major(&kernel.data()[tap..tap + cin * cout], cin, cout).t(),
                    &mut dpadded[off..off + m * cin],
                    true,
                );
            }
        }
    }
    let mut dx = vec![0.0; h * w * cin];
    if want_input {
        for i in 0..h {
            let src = ((i + 1) * wp + 1) * cin;
            dx[i * w * cin..(i + 1) * w * cin].copy_from_slice(&dpadded[src..src + w * cin]);
        }
    }
    dx
}

/// Rows are output pixels; columns are `(kh, kw, channel)` with zero padding.
fn im2col(x: &[f64], h: usize, w: usize, cin: usize) -> Vec<f64> {
    let k = KERNEL * KERNEL * cin;
    let mut patches = vec![0.0; h * w * k];
    for i in 0..h {
        for j in 0..w {
            let row = &mut patches[(i * w + j) * k..(i * w + j + 1) * k];
            for kh in 0..KERNEL {
                let si = i + kh;
                if si == 0 || si > h {
                    continue;
                }
                let si = si - 1;
                for kw in 0..KERNEL {
                    let sj = j + kw;
                    if sj == 0 || sj > w {
                        continue;
                    }
                    let sj = sj - 1;
                    let dst = (kh * KERNEL + kw) * cin;
                    let src = (si * w + sj) * cin;
                    row[dst..dst + cin].copy_from_slice(&x[src..src + cin]);
                }
            }
        }
    }
    patches
}

fn col2im(dpatches: &[f64], h: usize, w: usize, cin: usize) -> Vec<f64> {
    let k = KERNEL * KERNEL * cin;
    let mut dx = vec![0.0; h * w * cin];
    for i in 0..h {
        for j in 0..w {
            let row = &dpatches[(i * w + j) * k..(i * w + j + 1) * k];
            for kh in 0..KERNEL {
                let si = i + kh;
                if si == 0 || si > h {
                    continue;
                }
                let si = si - 1;
                for kw in 0..KERNEL {
                    let sj = j + kw;
                    if sj == 0 || sj > w {
                        continue;
                    }
                    let sj = sj - 1;
                    let src = (kh * KERNEL + kw) * cin;
                    let dst = (si * w + sj) * cin;
                    for (d, s) in dx[dst..dst + cin].iter_mut().zip(&row[src..src + cin]) {
                        *d += s;
                    }
                }
            }
        }
    }
    dx
}

/// 2×2 stride-2 max pooling over HWC data. In ceil mode the trailing
/// window covers only the remaining row/column.
fn maxpool(x: &Tensor, out_shape: &[usize]) -> (Tensor, Vec<usize>) {
    let (h, w, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (oh, ow) = (out_shape[0], out_shape[1]);
    let data = x.data();
    let mut out = vec![f64::NEG_INFINITY; oh * ow * c];
    let mut arg = vec![0usize; oh * ow * c];
    for oi in 0..oh {
        for oj in 0..ow {
            let base = (oi * ow + oj) * c;
            for si in 2 * oi..(2 * oi + 2).min(h) {
                for sj in 2 * oj..(2 * oj + 2).min(w) {
                    let src = (si * w + sj) * c;
                    for ch in 0..c {
                        let v = data[src + ch];
                        if v > out[base + ch] {
                            out[base + ch] = v;
                            arg[base + ch] = src + ch;
                        }
                    }
                }
            }
        }
    }
    (Tensor::from_parts(out_shape.to_vec(), out), arg)
}

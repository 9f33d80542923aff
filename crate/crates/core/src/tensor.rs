//! Shaped arrays and a tape-based reverse-mode differentiation engine.
//!
//! A [`Graph`] records every operation applied to its [`Var`] handles in
//! execution order. [`Graph::backward`] walks the tape in reverse once,
//! accumulating gradients additively, so a value consumed by several
//! operations receives the sum of all branch gradients.
//!
//! Activations are `[channels, length]`; convolution kernels are
//! `[out_channels, in_channels, width]`.

use std::borrow::Cow;

use rand::Rng;
use thiserror::Error;

use crate::dsp::{self, StftParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: shape mismatch: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("subpixel upsampling needs an even channel count, got {0}")]
    OddChannels(usize),
    #[error("dropout rate {0} outside [0, 1)")]
    DropoutRate(f64),
}

fn shape_err(op: &'static str, detail: String) -> TensorError {
    TensorError::Shape { op, detail }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorError> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(shape_err(
                "tensor",
                format!("shape {shape:?} needs {n} values, got {}", data.len()),
            ));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![v],
        }
    }

    /// A `[1, len]` activation.
    pub fn signal(samples: Vec<f64>) -> Self {
        Self {
            shape: vec![1, samples.len()],
            data: samples,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn channels_len(&self, op: &'static str) -> Result<(usize, usize), TensorError> {
        match self.shape[..] {
            [c, l] => Ok((c, l)),
            _ => Err(shape_err(op, format!("expected [C, L], got {:?}", self.shape))),
        }
    }
}

/// Zero padding `(left, right)` giving an output length of `ceil(len / stride)`.
/// An odd total puts the extra zero on the right.
pub fn same_padding(len: usize, kernel: usize, stride: usize) -> (usize, usize) {
    let out = len.div_ceil(stride);
    let needed = (out.saturating_sub(1) * stride + kernel).saturating_sub(len);
    (needed / 2, needed - needed / 2)
}

/// Range of output positions `t` for which `t * stride + tap - left` lies in `0..len`.
fn valid_range(len: usize, out_len: usize, tap: usize, left: usize, stride: usize) -> (usize, usize) {
    let lo = if left > tap {
        (left - tap).div_ceil(stride)
    } else {
        0
    };
    if len + left <= tap {
        return (0, 0);
    }
    let hi = ((len - 1 + left - tap) / stride + 1).min(out_len);
    (lo.min(hi), hi)
}

/// Direct cross-correlation with "same" zero padding; output length `ceil(L / stride)`.
pub fn conv1d_forward(
    input: &Tensor,
    kernel: &Tensor,
    bias: &Tensor,
    stride: usize,
) -> Result<Tensor, TensorError> {
    let (c_in, len) = input.channels_len("conv1d")?;
    let [c_out, k_in, width] = kernel.shape[..] else {
        return Err(shape_err("conv1d", format!("kernel shape {:?}", kernel.shape)));
    };
    if k_in != c_in {
        return Err(shape_err(
            "conv1d",
            format!("kernel expects {k_in} input channels, input has {c_in}"),
        ));
    }
    if bias.numel() != c_out {
        return Err(shape_err(
            "conv1d",
            format!("bias has {} values for {c_out} output channels", bias.numel()),
        ));
    }
    if stride == 0 {
        return Err(shape_err("conv1d", "stride must be positive".into()));
    }
    let out_len = len.div_ceil(stride);
    let (left, _) = same_padding(len, width, stride);
    let mut out = vec![0.0; c_out * out_len];
    for co in 0..c_out {
        let row = &mut out[co * out_len..(co + 1) * out_len];
        row.iter_mut().for_each(|v| *v = bias.data[co]);
        for ci in 0..c_in {
            let x = &input.data[ci * len..(ci + 1) * len];
            let w = &kernel.data[(co * c_in + ci) * width..(co * c_in + ci + 1) * width];
            for (tap, &wv) in w.iter().enumerate() {
                let (lo, hi) = valid_range(len, out_len, tap, left, stride);
                if lo >= hi {
                    continue;
                }
                let start = lo * stride + tap - left;
                if stride == 1 {
                    for (o, xv) in row[lo..hi].iter_mut().zip(&x[start..start + (hi - lo)]) {
                        *o += wv * xv;
                    }
                } else {
                    for (o, xv) in row[lo..hi].iter_mut().zip(x[start..].iter().step_by(stride)) {
                        *o += wv * xv;
                    }
                }
            }
        }
    }
    Tensor::new(vec![c_out, out_len], out)
}

/// Gradients of [`conv1d_forward`] with respect to input, kernel and bias.
fn conv1d_backward(
    input: &Tensor,
    kernel: &Tensor,
    stride: usize,
    grad_out: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (c_in, len) = (input.shape[0], input.shape[1]);
    let (c_out, width) = (kernel.shape[0], kernel.shape[2]);
    let out_len = len.div_ceil(stride);
    let (left, _) = same_padding(len, width, stride);
    let mut gx = vec![0.0; input.numel()];
    let mut gw = vec![0.0; kernel.numel()];
    let mut gb = vec![0.0; c_out];
    for co in 0..c_out {
        let go = &grad_out[co * out_len..(co + 1) * out_len];
        gb[co] = go.iter().sum();
        for ci in 0..c_in {
            let x = &input.data[ci * len..(ci + 1) * len];
            let gxr = &mut gx[ci * len..(ci + 1) * len];
            let base = (co * c_in + ci) * width;
            for tap in 0..width {
                let wv = kernel.data[base + tap];
                let (lo, hi) = valid_range(len, out_len, tap, left, stride);
                if lo >= hi {
                    continue;
                }
                let start = lo * stride + tap - left;
                let mut acc = 0.0;
                if stride == 1 {
                    let xs = &x[start..start + (hi - lo)];
                    for (g, xv) in go[lo..hi].iter().zip(xs) {
                        acc += g * xv;
                    }
                    for (gi, g) in gxr[start..start + (hi - lo)].iter_mut().zip(&go[lo..hi]) {
                        *gi += wv * g;
                    }
                } else {
                    for (i, g) in go[lo..hi].iter().enumerate() {
                        let idx = start + i * stride;
                        acc += g * x[idx];
                        gxr[idx] += wv * g;
                    }
                }
                gw[base + tap] += acc;
            }
        }
    }
    (gx, gw, gb)
}

/// Channel-to-time interleave: `[C, L] -> [C/2, 2L]`,
/// `out[c, 2t] = in[2c, t]`, `out[c, 2t+1] = in[2c+1, t]`.
pub fn subpixel_forward(input: &Tensor) -> Result<Tensor, TensorError> {
    let (c, len) = input.channels_len("subpixel_upsample")?;
    if c % 2 != 0 {
        return Err(TensorError::OddChannels(c));
    }
    let mut out = vec![0.0; c * len];
    for oc in 0..c / 2 {
        let even = &input.data[2 * oc * len..(2 * oc + 1) * len];
        let odd = &input.data[(2 * oc + 1) * len..(2 * oc + 2) * len];
        let row = &mut out[oc * 2 * len..(oc + 1) * 2 * len];
        for t in 0..len {
            row[2 * t] = even[t];
            row[2 * t + 1] = odd[t];
        }
    }
    Tensor::new(vec![c / 2, 2 * len], out)
}

/// Adjoint of [`subpixel_forward`]: de-interleaves `[C/2, 2L]` back into `[C, L]`.
pub fn subpixel_adjoint(grad: &[f64], channels: usize, len: usize) -> Vec<f64> {
    let mut out = vec![0.0; channels * len];
    for oc in 0..channels / 2 {
        let row = &grad[oc * 2 * len..(oc + 1) * 2 * len];
        for t in 0..len {
            out[2 * oc * len + t] = row[2 * t];
            out[(2 * oc + 1) * len + t] = row[2 * t + 1];
        }
    }
    out
}

/// Handle to a value recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Conv1d {
        input: Var,
        kernel: Var,
        bias: Var,
        stride: usize,
    },
    LeakyRelu {
        input: Var,
        slope: f64,
    },
    Dropout {
        input: Var,
        mask: Vec<f64>,
    },
    Concat {
        a: Var,
        b: Var,
    },
    SliceChannels {
        input: Var,
        start: usize,
    },
    Subpixel {
        input: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Sub {
        a: Var,
        b: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    Scale {
        input: Var,
        factor: f64,
    },
    Square {
        input: Var,
    },
    Sum {
        input: Var,
    },
    Mean {
        input: Var,
    },
    StftMagnitude {
        input: Var,
        params: StftParams,
    },
}

#[derive(Debug)]
struct Node<'a> {
    value: Cow<'a, Tensor>,
    op: Op,
    grad: Option<Vec<f64>>,
}

/// Operation tape. Parameters may be borrowed (`'a`) to avoid copies.
#[derive(Debug, Default)]
pub struct Graph<'a> {
    nodes: Vec<Node<'a>>,
}

impl<'a> Graph<'a> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Cow<'a, Tensor>, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            op,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records an owned input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(Cow::Owned(value), Op::Leaf)
    }

    /// Records a borrowed parameter.
    pub fn param(&mut self, value: &'a Tensor) -> Var {
        self.push(Cow::Borrowed(value), Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Accumulated gradient of `v`, if `v` was reached by [`Graph::backward`].
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn grad_tensor(&self, v: Var) -> Option<Tensor> {
        self.grad(v).map(|g| Tensor {
            shape: self.value(v).shape.clone(),
            data: g.to_vec(),
        })
    }

    pub fn conv1d(&mut self, input: Var, kernel: Var, bias: Var, stride: usize) -> Result<Var, TensorError> {
        let out = conv1d_forward(self.value(input), self.value(kernel), self.value(bias), stride)?;
        Ok(self.push(
            Cow::Owned(out),
            Op::Conv1d {
                input,
                kernel,
                bias,
                stride,
            },
        ))
    }

    pub fn leaky_relu(&mut self, input: Var, slope: f64) -> Var {
        let x = self.value(input);
        let data = x.data.iter().map(|&v| if v >= 0.0 { v } else { slope * v }).collect();
        let out = Tensor {
            shape: x.shape.clone(),
            data,
        };
        self.push(Cow::Owned(out), Op::LeakyRelu { input, slope })
    }

    /// Inverted dropout in training mode; identity (the same `Var`) otherwise.
    pub fn dropout<R: Rng>(&mut self, input: Var, rate: f64, training: bool, rng: &mut R) -> Result<Var, TensorError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(TensorError::DropoutRate(rate));
        }
        if !training || rate == 0.0 {
            return Ok(input);
        }
        let keep = 1.0 / (1.0 - rate);
        let x = self.value(input);
        let mask: Vec<f64> = (0..x.numel())
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let out = Tensor {
            shape: x.shape.clone(),
            data: x.data.iter().zip(&mask).map(|(v, m)| v * m).collect(),
        };
        Ok(self.push(Cow::Owned(out), Op::Dropout { input, mask }))
    }

    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ca, la) = self.value(a).channels_len("concat_channels")?;
        let (cb, lb) = self.value(b).channels_len("concat_channels")?;
        if la != lb {
            return Err(shape_err("concat_channels", format!("lengths {la} and {lb} differ")));
        }
        let mut data = Vec::with_capacity((ca + cb) * la);
        data.extend_from_slice(&self.value(a).data);
        data.extend_from_slice(&self.value(b).data);
        let out = Tensor {
            shape: vec![ca + cb, la],
            data,
        };
        Ok(self.push(Cow::Owned(out), Op::Concat { a, b }))
    }

    /// Channels `start..start + count` of a `[C, L]` value.
    pub fn slice_channels(&mut self, input: Var, start: usize, count: usize) -> Result<Var, TensorError> {
        let (c, len) = self.value(input).channels_len("slice_channels")?;
        if start + count > c {
            return Err(shape_err(
                "slice_channels",
                format!("channels {start}..{} out of {c}", start + count),
            ));
        }
        let data = self.value(input).data[start * len..(start + count) * len].to_vec();
        let out = Tensor {
            shape: vec![count, len],
            data,
        };
        Ok(self.push(Cow::Owned(out), Op::SliceChannels { input, start }))
    }

    pub fn subpixel_upsample(&mut self, input: Var) -> Result<Var, TensorError> {
        let out = subpixel_forward(self.value(input))?;
        Ok(self.push(Cow::Owned(out), Op::Subpixel { input }))
    }

    fn binary(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor, TensorError> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape != y.shape {
            return Err(shape_err(op, format!("{:?} vs {:?}", x.shape, y.shape)));
        }
        Ok(Tensor {
            shape: x.shape.clone(),
            data: x.data.iter().zip(&y.data).map(|(&p, &q)| f(p, q)).collect(),
        })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let out = self.binary("add", a, b, |p, q| p + q)?;
        Ok(self.push(Cow::Owned(out), Op::Add { a, b }))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let out = self.binary("sub", a, b, |p, q| p - q)?;
        Ok(self.push(Cow::Owned(out), Op::Sub { a, b }))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let out = self.binary("mul", a, b, |p, q| p * q)?;
        Ok(self.push(Cow::Owned(out), Op::Mul { a, b }))
    }

    pub fn scale(&mut self, input: Var, factor: f64) -> Var {
        let x = self.value(input);
        let out = Tensor {
            shape: x.shape.clone(),
            data: x.data.iter().map(|v| v * factor).collect(),
        };
        self.push(Cow::Owned(out), Op::Scale { input, factor })
    }

    pub fn square(&mut self, input: Var) -> Var {
        let x = self.value(input);
        let out = Tensor {
            shape: x.shape.clone(),
            data: x.data.iter().map(|v| v * v).collect(),
        };
        self.push(Cow::Owned(out), Op::Square { input })
    }

    pub fn sum(&mut self, input: Var) -> Var {
        let s = self.value(input).data.iter().sum();
        self.push(Cow::Owned(Tensor::scalar(s)), Op::Sum { input })
    }

    pub fn mean(&mut self, input: Var) -> Var {
        let x = self.value(input);
        let s = x.data.iter().sum::<f64>() / x.numel().max(1) as f64;
        self.push(Cow::Owned(Tensor::scalar(s)), Op::Mean { input })
    }

    /// `[frames, bins]` STFT magnitude of a single-channel value.
    pub fn stft_magnitude(&mut self, input: Var, params: StftParams) -> Result<Var, TensorError> {
        let x = self.value(input);
        if x.shape.len() == 2 && x.shape[0] != 1 {
            return Err(shape_err("stft_magnitude", format!("needs one channel, got {:?}", x.shape)));
        }
        let spec = dsp::stft_magnitude(&x.data, &params);
        let out = Tensor {
            shape: vec![spec.frames(), spec.bins()],
            data: spec.into_vec(),
        };
        Ok(self.push(Cow::Owned(out), Op::StftMagnitude { input, params }))
    }

    fn accumulate(&mut self, v: Var, g: Vec<f64>) {
        match &mut self.nodes[v.0].grad {
            Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
            slot @ None => *slot = Some(g),
        }
    }

    /// Back-propagates from the scalar `loss`, populating the gradient of
    /// every value it depends on.
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        let shape = &self.value(loss).shape;
        if self.value(loss).numel() != 1 {
            return Err(TensorError::NotScalar(shape.clone()));
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        self.nodes[loss.0].grad = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(grad) = self.nodes[i].grad.take() else {
                continue;
            };
            let contributions = self.local_backward(i, &grad);
            self.nodes[i].grad = Some(grad);
            for (v, g) in contributions {
                self.accumulate(v, g);
            }
        }
        Ok(())
    }

    fn local_backward(&self, i: usize, grad: &[f64]) -> Vec<(Var, Vec<f64>)> {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => vec![],
            Op::Conv1d {
                input,
                kernel,
                bias,
                stride,
            } => {
                let (gx, gw, gb) = conv1d_backward(self.value(*input), self.value(*kernel), *stride, grad);
                vec![(*input, gx), (*kernel, gw), (*bias, gb)]
            }
            Op::LeakyRelu { input, slope } => {
                let x = &self.value(*input).data;
                let g = x
                    .iter()
                    .zip(grad)
                    .map(|(&v, &g)| if v >= 0.0 { g } else { slope * g })
                    .collect();
                vec![(*input, g)]
            }
            Op::Dropout { input, mask } => {
                vec![(*input, grad.iter().zip(mask).map(|(g, m)| g * m).collect())]
            }
            Op::Concat { a, b } => {
                let na = self.value(*a).numel();
                vec![(*a, grad[..na].to_vec()), (*b, grad[na..].to_vec())]
            }
            Op::SliceChannels { input, start } => {
                let x = self.value(*input);
                let len = x.shape[1];
                let mut g = vec![0.0; x.numel()];
                g[start * len..start * len + grad.len()].copy_from_slice(grad);
                vec![(*input, g)]
            }
            Op::Subpixel { input } => {
                let x = self.value(*input);
                vec![(*input, subpixel_adjoint(grad, x.shape[0], x.shape[1]))]
            }
            Op::Add { a, b } => vec![(*a, grad.to_vec()), (*b, grad.to_vec())],
            Op::Sub { a, b } => vec![(*a, grad.to_vec()), (*b, grad.iter().map(|g| -g).collect())],
            Op::Mul { a, b } => {
                let (x, y) = (&self.value(*a).data, &self.value(*b).data);
                vec![
                    (*a, grad.iter().zip(y).map(|(g, q)| g * q).collect()),
                    (*b, grad.iter().zip(x).map(|(g, p)| g * p).collect()),
                ]
            }
            Op::Scale { input, factor } => vec![(*input, grad.iter().map(|g| g * factor).collect())],
            Op::Square { input } => {
                let x = &self.value(*input).data;
                vec![(*input, grad.iter().zip(x).map(|(g, v)| 2.0 * v * g).collect())]
            }
            Op::Sum { input } => vec![(*input, vec![grad[0]; self.value(*input).numel()])],
            Op::Mean { input } => {
                let n = self.value(*input).numel();
                vec![(*input, vec![grad[0] / n.max(1) as f64; n])]
            }
            Op::StftMagnitude { input, params } => {
                let x = &self.value(*input).data;
                let g = dsp::stft_magnitude_grad(x, params, grad).expect("upstream shape recorded by forward");
                vec![(*input, g)]
            }
        }
    }
}

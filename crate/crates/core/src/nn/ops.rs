//! Unbatched entry points for the layer set. Each wraps the batched tape
//! kernels with a batch of one.

use super::kernels::{self, ConvGeom};
use super::tape::{dropout_mask, Activation, Tape};
use super::Mode;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn with_batch(t: &Tensor, shape5: &[usize]) -> Result<Tensor> {
    t.clone().reshape(shape5)
}

fn expect_rank(t: &Tensor, rank: usize, what: &str) -> Result<()> {
    if t.ndim() != rank {
        return Err(Error::Shape(format!("{what} must be {rank}-D, got {:?}", t.shape())));
    }
    Ok(())
}

/// Rectified cubic convolution: `input` is `[C, D, H, W]`, `kernels`
/// `[N, C, R, Hk, Wk]`; output `[N, D', H', W']`.
pub fn conv3d_forward(input: &Tensor, kernels: &Tensor, bias: &Tensor, geom: &ConvGeom) -> Result<Tensor> {
    expect_rank(input, 4, "conv3d input")?;
    let s = input.shape();
    let x = with_batch(input, &[1, s[0], s[1], s[2], s[3]])?;
    let y = kernels::conv3d(&x, kernels, bias, geom)?;
    let out = y.shape()[1..].to_vec();
    y.map(|v| v.max(0.0)).reshape(&out)
}

/// Rectified 1-D convolution sliding along the last axis only: `input` is
/// `[M, X]` with the M rows as channels, `kernels` `[N, M, Wk]`.
pub fn conv1d_forward(input: &Tensor, kernels: &Tensor, bias: &Tensor) -> Result<Tensor> {
    expect_rank(input, 2, "conv1d input")?;
    expect_rank(kernels, 3, "conv1d kernels")?;
    let (m, x) = (input.shape()[0], input.shape()[1]);
    let ks = kernels.shape();
    let xin = with_batch(input, &[1, m, 1, 1, x])?;
    let k = kernels.clone().reshape(&[ks[0], ks[1], 1, 1, ks[2]])?;
    let y = kernels::conv3d(&xin, &k, bias, &ConvGeom::default())?;
    let xo = y.shape()[4];
    y.map(|v| v.max(0.0)).reshape(&[ks[0], xo])
}

/// `u / (a + I)` elementwise with the denominator floor. Returns the output
/// and how many denominators were clamped.
pub fn shunting_forward(u: &Tensor, inhibition: &Tensor, passive_decay: f64) -> Result<(Tensor, usize)> {
    if !(passive_decay > 0.0) {
        return Err(Error::Invalid(format!("passive decay must be positive, got {passive_decay}")));
    }
    let (s, clamped) = kernels::shunting(u, inhibition, passive_decay)?;
    Ok((s, clamped.iter().filter(|&&c| c).count()))
}

/// Fully connected layer on a flat input.
pub fn fc_forward(input: &Tensor, weights: &Tensor, bias: &Tensor, activation: Activation) -> Result<Tensor> {
    expect_rank(input, 1, "fc input")?;
    let x = input.clone().reshape(&[1, input.len()])?;
    let y = kernels::linear(&x, weights, bias)?;
    let y = match activation {
        Activation::Relu => y.map(|v| v.max(0.0)),
        Activation::Tanh => y.map(f64::tanh),
        Activation::Sigmoid => y.map(|v| 1.0 / (1.0 + (-v).exp())),
        Activation::Linear => y,
    };
    let n = y.len();
    y.reshape(&[n])
}

/// Max pooling over the trailing `dims` axes of a `[C, ...]` tensor.
/// Window and stride apply uniformly to each pooled axis.
pub fn pool_max(input: &Tensor, window: usize, stride: usize, dims: usize) -> Result<Tensor> {
    if !(1..=3).contains(&dims) {
        return Err(Error::Invalid(format!("pooling supports 1-3 dims, got {dims}")));
    }
    expect_rank(input, dims + 1, "pool input")?;
    let s = input.shape();
    let mut shape5 = vec![1, s[0]];
    shape5.extend(std::iter::repeat(1).take(3 - dims));
    shape5.extend_from_slice(&s[1..]);
    let mut win = [1; 3];
    let mut st = [1; 3];
    for a in 3 - dims..3 {
        win[a] = window;
        st[a] = stride;
    }
    let (y, _) = kernels::max_pool3d(&with_batch(input, &shape5)?, win, st)?;
    let mut out = vec![s[0]];
    out.extend_from_slice(&y.shape()[5 - dims..]);
    y.reshape(&out)
}

/// Running statistics of a batch-norm layer.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

impl RunningStats {
    pub fn new(channels: usize) -> Self {
        Self { mean: vec![0.0; channels], var: vec![1.0; channels] }
    }

    /// `running = momentum * running + (1 - momentum) * batch`
    pub fn update(&mut self, batch_mean: &[f64], batch_var: &[f64]) {
        for (r, b) in self.mean.iter_mut().zip(batch_mean) {
            *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * b;
        }
        for (r, b) in self.var.iter_mut().zip(batch_var) {
            *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * b;
        }
    }
}

/// Per-feature-map normalization of a `[B, C, ...]` batch. In train mode the
/// batch statistics are used and folded into `stats`; in infer mode `stats`
/// are used as-is.
pub fn batchnorm_forward(
    input: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    stats: &mut RunningStats,
    mode: Mode,
    eps: f64,
) -> Result<Tensor> {
    let mut tape = Tape::new();
    let x = tape.input(input.clone())?;
    let g = tape.input(gamma.clone())?;
    let b = tape.input(beta.clone())?;
    let y = match mode {
        Mode::Train => {
            let (y, m, v) = tape.batch_norm_train(x, g, b, eps)?;
            stats.update(&m, &v);
            y
        }
        Mode::Infer => tape.batch_norm_infer(x, g, b, &stats.mean, &stats.var, eps)?,
    };
    Ok(tape.value(y).clone())
}

/// Inverted dropout, deterministic under `seed`.
pub fn dropout(input: &Tensor, rate: f64, seed: u64, mode: Mode) -> Result<Tensor> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Invalid(format!("dropout rate {rate} outside [0, 1)")));
    }
    if mode == Mode::Infer || rate == 0.0 {
        return Ok(input.clone());
    }
    let mask = dropout_mask(input.len(), rate, seed);
    Tensor::new(input.shape(), input.data().iter().zip(&mask).map(|(a, m)| a * m).collect())
}

/// Cross-entropy of `softmax(logits)` against a target distribution.
pub fn softmax_crossentropy(logits: &Tensor, target: &Tensor) -> Result<f64> {
    let mut tape = Tape::new();
    let l = tape.input(logits.clone().reshape(&[1, logits.len()])?)?;
    let t = target.clone().reshape(&[1, target.len()])?;
    let loss = tape.softmax_cross_entropy(l, &t)?;
    Ok(tape.value(loss).data()[0])
}

pub fn mse(pred: &Tensor, target: &Tensor) -> Result<f64> {
    let mut tape = Tape::new();
    let p = tape.input(pred.clone())?;
    let loss = tape.mse(p, target)?;
    Ok(tape.value(loss).data()[0])
}

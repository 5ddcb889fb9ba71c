//! Reverse-mode automatic differentiation over a linear operation record.
//!
//! A [`Tape`] is built fresh for every forward pass. Operations append nodes
//! in evaluation order; [`Tape::backward`] walks them in exact reverse order
//! with zero-initialized gradient accumulators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::kernels::{self, ConvGeom};
use super::params::{ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Linear,
}

/// Counts of numeric incidents seen while evaluating a tape.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NumericWarnings {
    pub shunting_clamps: usize,
}

enum Op {
    Leaf,
    Param(ParamId),
    Conv { x: Var, k: Var, b: Var, geom: ConvGeom },
    Linear { x: Var, w: Var, b: Var },
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Add(Var, Var),
    Scale(Var, f64),
    Shunting { u: Var, i: Var, decay: f64, clamped: Vec<bool> },
    MaxPool { x: Var, argmax: Vec<usize> },
    BatchNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, inv_std: Vec<f64> },
    /// Fixed affine per channel (inference-mode batch norm): y = (x - mean) * scale + beta.
    ChannelAffine { x: Var, gamma: Var, beta: Var, scale: Vec<f64>, centered: Vec<f64> },
    Dropout { x: Var, mask: Vec<f64> },
    Reshape(Var),
    Concat(Vec<Var>),
    SoftmaxCe { logits: Var, target: Tensor, probs: Vec<f64> },
    Mse { pred: Var, target: Tensor },
    Sum(Var),
    AddScalarLoss(Var, Var),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Gradients produced by one backward pass.
pub struct Grads {
    node_grads: Vec<Option<Tensor>>,
    params: Vec<(ParamId, usize)>,
}

impl Grads {
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.node_grads[v.0].as_ref()
    }

    /// Gradient accumulated over every use of `id` on the tape.
    pub fn param(&self, id: ParamId) -> Option<Tensor> {
        let mut acc: Option<Tensor> = None;
        for &(pid, node) in &self.params {
            if pid != id {
                continue;
            }
            if let Some(g) = &self.node_grads[node] {
                match &mut acc {
                    Some(a) => a.axpy(1.0, g).expect("param grads share a shape"),
                    None => acc = Some(g.clone()),
                }
            }
        }
        acc
    }

    pub fn param_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.params.iter().map(|(p, _)| *p)
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    warnings: NumericWarnings,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn warnings(&self) -> NumericWarnings {
        self.warnings
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::Numeric(format!("non-finite value produced by a {} node", op_name(&op))));
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn input(&mut self, t: Tensor) -> Result<Var> {
        self.push(t, Op::Leaf)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let value = store.get(id).clone();
        self.nodes.push(Node { value, op: Op::Param(id) });
        Var(self.nodes.len() - 1)
    }

    pub fn conv(&mut self, x: Var, k: Var, b: Var, geom: ConvGeom) -> Result<Var> {
        let y = kernels::conv3d(self.value(x), self.value(k), self.value(b), &geom)?;
        self.push(y, Op::Conv { x, k, b, geom })
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = kernels::linear(self.value(x), self.value(w), self.value(b))?;
        self.push(y, Op::Linear { x, w, b })
    }

    pub fn activate(&mut self, x: Var, act: Activation) -> Result<Var> {
        match act {
            Activation::Relu => self.relu(x),
            Activation::Tanh => {
                let y = self.value(x).map(f64::tanh);
                self.push(y, Op::Tanh(x))
            }
            Activation::Sigmoid => {
                let y = self.value(x).map(|v| 1.0 / (1.0 + (-v).exp()));
                self.push(y, Op::Sigmoid(x))
            }
            Activation::Linear => Ok(x),
        }
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let y = self.value(x).map(|v| v.max(0.0));
        self.push(y, Op::Relu(x))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = self.value(a).zip_map(self.value(b), |p, q| p + q)?;
        self.push(y, Op::Add(a, b))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        let y = self.value(x).map(|v| v * factor);
        self.push(y, Op::Scale(x, factor))
    }

    pub fn shunting(&mut self, u: Var, i: Var, decay: f64) -> Result<Var> {
        let (y, clamped) = kernels::shunting(self.value(u), self.value(i), decay)?;
        self.warnings.shunting_clamps += clamped.iter().filter(|&&c| c).count();
        self.push(y, Op::Shunting { u, i, decay, clamped })
    }

    /// Max pooling on a `[B, C, D, H, W]` node.
    pub fn max_pool(&mut self, x: Var, window: [usize; 3], stride: [usize; 3]) -> Result<Var> {
        let (y, argmax) = kernels::max_pool3d(self.value(x), window, stride)?;
        self.push(y, Op::MaxPool { x, argmax })
    }

    /// Training-mode batch norm; returns the output and the batch (mean, var).
    pub fn batch_norm_train(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
    ) -> Result<(Var, Vec<f64>, Vec<f64>)> {
        if self.value(x).shape()[0] < 2 {
            return Err(Error::Invalid("batch norm in train mode needs a batch of at least 2".into()));
        }
        let out = kernels::batch_norm_train(
            self.value(x),
            self.value(gamma).data(),
            self.value(beta).data(),
            eps,
        )?;
        let v = self.push(
            out.output,
            Op::BatchNorm { x, gamma, beta, xhat: out.xhat, inv_std: out.inv_std },
        )?;
        Ok((v, out.mean, out.var))
    }

    pub fn batch_norm_infer(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mean: &[f64],
        var: &[f64],
        eps: f64,
    ) -> Result<Var> {
        let (y, _) = kernels::batch_norm_infer(
            self.value(x),
            self.value(gamma).data(),
            self.value(beta).data(),
            mean,
            var,
            eps,
        )?;
        let scale = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        self.push(y, Op::ChannelAffine { x, gamma, beta, scale, centered: mean.to_vec() })
    }

    /// Inverted dropout. `rate == 0` or `train == false` is the identity.
    pub fn dropout(&mut self, x: Var, rate: f64, seed: u64, train: bool) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Invalid(format!("dropout rate {rate} outside [0, 1)")));
        }
        if !train || rate == 0.0 {
            return Ok(x);
        }
        let mask = dropout_mask(self.value(x).len(), rate, seed);
        let y = Tensor::new(
            self.value(x).shape(),
            self.value(x).data().iter().zip(&mask).map(|(a, m)| a * m).collect(),
        )?;
        self.push(y, Op::Dropout { x, mask })
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let y = self.value(x).clone().reshape(shape)?;
        self.push(y, Op::Reshape(x))
    }

    /// Flattens every axis after the batch axis.
    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).shape();
        let b = s[0];
        let rest: usize = s[1..].iter().product();
        self.reshape(x, &[b, rest])
    }

    /// Concatenates `[B, n_i]` nodes along the feature axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let b = self.value(parts[0]).shape()[0];
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            match self.value(p).shape() {
                [pb, n] if *pb == b => widths.push(*n),
                s => return Err(Error::Shape(format!("concat expects [{b}, n] parts, got {s:?}"))),
            }
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(b * total);
        for bi in 0..b {
            for (&p, &n) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[bi * n..(bi + 1) * n]);
            }
        }
        let y = Tensor::new(&[b, total], data)?;
        self.push(y, Op::Concat(parts.to_vec()))
    }

    /// Mean over the batch of the cross-entropy between `softmax(logits)` and
    /// the target distributions (rows must each sum to 1).
    pub fn softmax_cross_entropy(&mut self, logits: Var, target: &Tensor) -> Result<Var> {
        let l = self.value(logits);
        l.expect_same_shape(target)?;
        let classes = *l.shape().last().unwrap();
        for (r, row) in target.data().chunks(classes).enumerate() {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-6 || row.iter().any(|&p| p < 0.0) {
                return Err(Error::Invalid(format!(
                    "target row {r} is not a probability distribution (sums to {s})"
                )));
            }
        }
        let probs = kernels::softmax_rows(l.data(), classes);
        let batch = l.len() / classes;
        let mut loss = 0.0;
        for (p, t) in probs.iter().zip(target.data()) {
            if *t > 0.0 {
                loss -= t * p.max(1e-300).ln();
            }
        }
        loss /= batch as f64;
        self.push(Tensor::scalar(loss), Op::SoftmaxCe { logits, target: target.clone(), probs })
    }

    pub fn mse(&mut self, pred: Var, target: &Tensor) -> Result<Var> {
        let p = self.value(pred);
        p.expect_same_shape(target)?;
        let n = p.len() as f64;
        let loss = p.data().iter().zip(target.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
        self.push(Tensor::scalar(loss), Op::Mse { pred, target: target.clone() })
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    /// Adds two scalar losses.
    pub fn add_losses(&mut self, a: Var, b: Var) -> Result<Var> {
        let s = self.value(a).data()[0] + self.value(b).data()[0];
        self.push(Tensor::scalar(s), Op::AddScalarLoss(a, b))
    }

    /// Back-propagates from the scalar node `loss`.
    pub fn backward(&self, loss: Var) -> Result<Grads> {
        if self.value(loss).len() != 1 {
            return Err(Error::Shape("backward needs a scalar loss".into()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if matches!(node.op, Op::Leaf | Op::Param(_)) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            let mut send = |target: Var, t: Tensor| -> Result<()> {
                match &mut grads[target.0] {
                    Some(acc) => acc.axpy(1.0, &t),
                    slot @ None => {
                        *slot = Some(t);
                        Ok(())
                    }
                }
            };
            match &node.op {
                Op::Leaf | Op::Param(_) => unreachable!(),
                Op::Conv { x, k, b, geom } => {
                    let (gx, gk, gb) = kernels::conv3d_backward(self.value(*x), self.value(*k), geom, &g)?;
                    send(*x, gx)?;
                    send(*k, gk)?;
                    send(*b, gb)?;
                }
                Op::Linear { x, w, b } => {
                    let (gx, gw, gb) = kernels::linear_backward(self.value(*x), self.value(*w), &g)?;
                    send(*x, gx)?;
                    send(*w, gw)?;
                    send(*b, gb)?;
                }
                Op::Relu(x) => {
                    let gx = self.value(*x).zip_map(&g, |v, gv| if v > 0.0 { gv } else { 0.0 })?;
                    send(*x, gx)?;
                }
                Op::Tanh(x) => {
                    let gx = node.value.zip_map(&g, |y, gv| gv * (1.0 - y * y))?;
                    send(*x, gx)?;
                }
                Op::Sigmoid(x) => {
                    let gx = node.value.zip_map(&g, |y, gv| gv * y * (1.0 - y))?;
                    send(*x, gx)?;
                }
                Op::Add(a, b) => {
                    send(*a, g.clone())?;
                    send(*b, g)?;
                }
                Op::Scale(x, f) => send(*x, g.map(|v| v * f))?,
                Op::Shunting { u, i, decay, clamped } => {
                    let uv = self.value(*u).data();
                    let iv = self.value(*i).data();
                    let mut gu = Vec::with_capacity(uv.len());
                    let mut gi = Vec::with_capacity(uv.len());
                    for j in 0..uv.len() {
                        let (den, _) = kernels::floored_denominator(decay + iv[j]);
                        gu.push(g.data()[j] / den);
                        gi.push(if clamped[j] { 0.0 } else { -g.data()[j] * uv[j] / (den * den) });
                    }
                    send(*u, Tensor::new(g.shape(), gu)?)?;
                    send(*i, Tensor::new(g.shape(), gi)?)?;
                }
                Op::MaxPool { x, argmax } => {
                    let mut gx = Tensor::zeros(self.value(*x).shape());
                    for (o, &src) in argmax.iter().enumerate() {
                        gx.data_mut()[src] += g.data()[o];
                    }
                    send(*x, gx)?;
                }
                Op::BatchNorm { x, gamma, beta, xhat, inv_std } => {
                    let (dx, dgamma, dbeta) = kernels::batch_norm_train_backward(
                        self.value(*x).shape(),
                        self.value(*gamma).data(),
                        xhat,
                        inv_std,
                        g.data(),
                    )?;
                    send(*x, Tensor::new(self.value(*x).shape(), dx)?)?;
                    send(*gamma, Tensor::new(self.value(*gamma).shape(), dgamma)?)?;
                    send(*beta, Tensor::new(self.value(*beta).shape(), dbeta)?)?;
                }
                Op::ChannelAffine { x, gamma, beta, scale, centered } => {
                    let xs = self.value(*x);
                    let (b, c, inner) = kernels::channel_layout(xs.shape())?;
                    let gam = self.value(*gamma).data();
                    let mut dx = vec![0.0; xs.len()];
                    let mut dgamma = vec![0.0; c];
                    let mut dbeta = vec![0.0; c];
                    for bi in 0..b {
                        for ci in 0..c {
                            for k in 0..inner {
                                let j = (bi * c + ci) * inner + k;
                                let gv = g.data()[j];
                                dx[j] = gv * gam[ci] * scale[ci];
                                dgamma[ci] += gv * (xs.data()[j] - centered[ci]) * scale[ci];
                                dbeta[ci] += gv;
                            }
                        }
                    }
                    send(*x, Tensor::new(xs.shape(), dx)?)?;
                    send(*gamma, Tensor::new(&[c], dgamma)?)?;
                    send(*beta, Tensor::new(&[c], dbeta)?)?;
                }
                Op::Dropout { x, mask } => {
                    let gx = Tensor::new(g.shape(), g.data().iter().zip(mask).map(|(a, m)| a * m).collect())?;
                    send(*x, gx)?;
                }
                Op::Reshape(x) => send(*x, g.reshape(self.value(*x).shape())?)?,
                Op::Concat(parts) => {
                    let b = g.shape()[0];
                    let total = g.shape()[1];
                    let mut off = 0;
                    for &p in parts {
                        let n = self.value(p).shape()[1];
                        let mut d = Vec::with_capacity(b * n);
                        for bi in 0..b {
                            d.extend_from_slice(&g.data()[bi * total + off..bi * total + off + n]);
                        }
                        off += n;
                        send(p, Tensor::new(&[b, n], d)?)?;
                    }
                }
                Op::SoftmaxCe { logits, target, probs } => {
                    let classes = *target.shape().last().unwrap();
                    let batch = (target.len() / classes) as f64;
                    let s = g.data()[0] / batch;
                    let gl = probs.iter().zip(target.data()).map(|(p, t)| s * (p - t)).collect();
                    send(*logits, Tensor::new(target.shape(), gl)?)?;
                }
                Op::Mse { pred, target } => {
                    let n = target.len() as f64;
                    let s = 2.0 * g.data()[0] / n;
                    let gp = self.value(*pred).zip_map(target, |p, t| s * (p - t))?;
                    send(*pred, gp)?;
                }
                Op::Sum(x) => send(*x, Tensor::full(self.value(*x).shape(), g.data()[0]))?,
                Op::AddScalarLoss(a, b) => {
                    send(*a, g.clone())?;
                    send(*b, g)?;
                }
            }
        }
        for g in grads.iter().flatten() {
            if !g.all_finite() {
                return Err(Error::Numeric("non-finite gradient".into()));
            }
        }
        let params = self
            .nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| match n.op {
                Op::Param(id) => Some((id, i)),
                _ => None,
            })
            .collect();
        Ok(Grads { node_grads: grads, params })
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Param(_) => "param",
        Op::Conv { .. } => "conv",
        Op::Linear { .. } => "linear",
        Op::Relu(_) => "relu",
        Op::Tanh(_) => "tanh",
        Op::Sigmoid(_) => "sigmoid",
        Op::Add(..) => "add",
        Op::Scale(..) => "scale",
        Op::Shunting { .. } => "shunting",
        Op::MaxPool { .. } => "max-pool",
        Op::BatchNorm { .. } | Op::ChannelAffine { .. } => "batch-norm",
        Op::Dropout { .. } => "dropout",
        Op::Reshape(_) => "reshape",
        Op::Concat(_) => "concat",
        Op::SoftmaxCe { .. } => "softmax-cross-entropy",
        Op::Mse { .. } => "mse",
        Op::Sum(_) => "sum",
        Op::AddScalarLoss(..) => "loss-sum",
    }
}

/// Survivor scale factors (`0` or `1 / (1 - rate)`) for inverted dropout.
pub fn dropout_mask(len: usize, rate: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep = 1.0 / (1.0 - rate);
    (0..len).map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep }).collect()
}

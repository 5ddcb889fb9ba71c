use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::ops::Range;

use super::spec::{ChannelSpec, LayerSpec};
use crate::error::Result;
use crate::nn::ops::{RunningStats, BN_EPSILON};
use crate::nn::{ConvGeom, Mode, ParamId, ParamStore, Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNormParams {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub stats: RunningStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LayerParams {
    Conv { kernel: ParamId, bias: ParamId, bn: Option<BatchNormParams> },
    Pool,
    Shunting { ku: ParamId, bu: ParamId, ki: ParamId, bi: ParamId },
}

impl LayerParams {
    pub fn ids(&self) -> Vec<ParamId> {
        match self {
            LayerParams::Conv { kernel, bias, bn } => {
                let mut v = vec![*kernel, *bias];
                if let Some(b) = bn {
                    v.extend([b.gamma, b.beta]);
                }
                v
            }
            LayerParams::Pool => Vec::new(),
            LayerParams::Shunting { ku, bu, ki, bi } => vec![*ku, *bu, *ki, *bi],
        }
    }
}

/// Batch statistics observed in a training pass: (layer index, mean, var).
pub type StatUpdates = Vec<(usize, Vec<f64>, Vec<f64>)>;

/// One unisensory convolutional channel: its layout plus parameter handles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub spec: ChannelSpec,
    pub layers: Vec<LayerParams>,
}

fn seed_for(seed: u64, layer: usize) -> u64 {
    seed ^ (layer as u64 + 1).wrapping_mul(0xA24B_AED4_963E_E407)
}

impl Channel {
    pub fn build(spec: ChannelSpec, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Result<Self> {
        spec.validate()?;
        let mut layers = Vec::with_capacity(spec.layers.len());
        let mut in_maps = spec.input[0];
        for (i, l) in spec.layers.iter().enumerate() {
            let prefix = format!("{}.{i}", spec.name);
            let p = match l {
                LayerSpec::Conv { filters, kernel, batch_norm, .. } => {
                    let fan_in = in_maps * kernel.iter().product::<usize>();
                    let k = store.add_he(
                        format!("{prefix}.kernel"),
                        &[*filters, in_maps, kernel[0], kernel[1], kernel[2]],
                        fan_in,
                        rng,
                    );
                    let b = store.add(format!("{prefix}.bias"), Tensor::zeros(&[*filters]));
                    let bn = batch_norm.then(|| BatchNormParams {
                        gamma: store.add(format!("{prefix}.gamma"), Tensor::full(&[*filters], 1.0)),
                        beta: store.add(format!("{prefix}.beta"), Tensor::zeros(&[*filters])),
                        stats: RunningStats::new(*filters),
                    });
                    in_maps = *filters;
                    LayerParams::Conv { kernel: k, bias: b, bn }
                }
                LayerSpec::Pool { .. } => LayerParams::Pool,
                LayerSpec::Shunting { filters, kernel, .. } => {
                    let fan_in = in_maps * kernel.iter().product::<usize>();
                    let shape = [*filters, in_maps, kernel[0], kernel[1], kernel[2]];
                    let ku = store.add_he(format!("{prefix}.excite"), &shape, fan_in, rng);
                    let bu = store.add(format!("{prefix}.excite_bias"), Tensor::zeros(&[*filters]));
                    let ki = store.add_he(format!("{prefix}.inhibit"), &shape, fan_in, rng);
                    let bi = store.add(format!("{prefix}.inhibit_bias"), Tensor::zeros(&[*filters]));
                    in_maps = *filters;
                    LayerParams::Shunting { ku, bu, ki, bi }
                }
            };
            layers.push(p);
        }
        Ok(Self { spec, layers })
    }

    pub fn param_ids(&self, range: Range<usize>) -> Vec<ParamId> {
        self.layers[range].iter().flat_map(LayerParams::ids).collect()
    }

    pub fn body(&self) -> Range<usize> {
        0..self.spec.last
    }

    pub fn top(&self) -> Range<usize> {
        self.spec.last..self.layers.len()
    }

    /// Runs `range` of the layers on a batched `[B, C, D, H, W]` node.
    pub fn run(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        mut x: Var,
        range: Range<usize>,
        mode: Mode,
        seed: u64,
        stats: &mut StatUpdates,
    ) -> Result<Var> {
        let train = mode == Mode::Train;
        for i in range {
            x = match (&self.spec.layers[i], &self.layers[i]) {
                (LayerSpec::Conv { pad, .. }, LayerParams::Conv { kernel, bias, bn }) => {
                    let k = tape.param(store, *kernel);
                    let b = tape.param(store, *bias);
                    let mut y = tape.conv(x, k, b, ConvGeom::padded(*pad))?;
                    if let Some(bn) = bn {
                        let g = tape.param(store, bn.gamma);
                        let be = tape.param(store, bn.beta);
                        y = if train {
                            let (v, m, var) = tape.batch_norm_train(y, g, be, BN_EPSILON)?;
                            stats.push((i, m, var));
                            v
                        } else {
                            tape.batch_norm_infer(y, g, be, &bn.stats.mean, &bn.stats.var, BN_EPSILON)?
                        };
                    }
                    tape.relu(y)?
                }
                (LayerSpec::Pool { window, dropout }, LayerParams::Pool) => {
                    let y = tape.max_pool(x, *window, *window)?;
                    tape.dropout(y, *dropout, seed_for(seed, i), train)?
                }
                (LayerSpec::Shunting { pad, decay, .. }, LayerParams::Shunting { ku, bu, ki, bi }) => {
                    let geom = ConvGeom::padded(*pad);
                    let (ku, bu) = (tape.param(store, *ku), tape.param(store, *bu));
                    let u = tape.conv(x, ku, bu, geom)?;
                    let u = tape.relu(u)?;
                    let (ki, bi) = (tape.param(store, *ki), tape.param(store, *bi));
                    let inh = tape.conv(x, ki, bi, geom)?;
                    let inh = tape.relu(inh)?;
                    tape.shunting(u, inh, *decay)?
                }
                _ => unreachable!("layer parameters are built from the spec"),
            };
        }
        Ok(x)
    }

    /// Folds batch statistics from a training pass into the running stats.
    pub fn apply_stats(&mut self, updates: &StatUpdates) {
        for (i, m, v) in updates {
            if let LayerParams::Conv { bn: Some(bn), .. } = &mut self.layers[*i] {
                bn.stats.update(m, v);
            }
        }
    }
}

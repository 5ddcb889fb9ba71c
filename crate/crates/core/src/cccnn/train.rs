//! Staged training: unisensory pre-training with classifier heads, then
//! cross-modal fine-tuning of the top layers with two regression outputs.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::model::{auditory_batch, visual_batch, Batch, Cccnn, PassMode, PassStats};
use crate::affect::NUM_CONCEPTS;
use crate::error::{Error, Result};
use crate::frontend::{MfccMap, VisualClip};
use crate::nn::{seeded_rng, Mode, ParamId, SgdL2, Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub epochs: usize,
    pub batch_size: usize,
    pub sgd: SgdL2,
    pub seed: u64,
    /// Random translation/rotation of training clips.
    pub augment: bool,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self { epochs: 20, batch_size: 8, sgd: SgdL2::default(), seed: 0, augment: false }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrainReport {
    /// Mean training loss per epoch.
    pub losses: Vec<f64>,
    /// Accuracy on the training set after each epoch (classification only).
    pub train_accuracy: Vec<f64>,
    /// Accuracy on the validation set after each epoch, if one was given.
    pub val_accuracy: Vec<f64>,
}

/// 70/15/15 train/validation/test split of `0..n` under `seed`.
pub fn split_indices(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seeded_rng(seed));
    let train = n * 70 / 100;
    let val = n * 15 / 100;
    let test = idx.split_off(train + val);
    let valid = idx.split_off(train);
    (idx, valid, test)
}

/// Mini-batches of `size`; a trailing batch of one joins its predecessor so
/// batch statistics are always defined.
pub fn batches(order: &[usize], size: usize) -> Vec<Vec<usize>> {
    let size = size.max(2);
    let mut out: Vec<Vec<usize>> = order.chunks(size).map(<[usize]>::to_vec).collect();
    if out.len() > 1 && out.last().map_or(false, |b| b.len() < 2) {
        let tail = out.pop().unwrap();
        out.last_mut().unwrap().extend(tail);
    }
    out
}

/// Random shift by up to one pixel and rotation by up to 10 degrees,
/// nearest-neighbour sampled with zero fill.
pub fn augment_clip(clip: &VisualClip, rng: &mut impl Rng) -> Result<VisualClip> {
    let t = clip.tensor();
    let (f, s) = (t.shape()[0], t.shape()[1]);
    let dx = rng.gen_range(-1i64..=1) as f64;
    let dy = rng.gen_range(-1i64..=1) as f64;
    let angle = rng.gen_range(-10.0f64..=10.0).to_radians();
    let (sin, cos) = angle.sin_cos();
    let c = (s as f64 - 1.0) / 2.0;
    let mut out = vec![0.0; t.len()];
    for fi in 0..f {
        for y in 0..s {
            for x in 0..s {
                let (xr, yr) = (x as f64 - c - dx, y as f64 - c - dy);
                let sx = (cos * xr + sin * yr + c).round();
                let sy = (-sin * xr + cos * yr + c).round();
                if sx >= 0.0 && sy >= 0.0 && (sx as usize) < s && (sy as usize) < s {
                    out[(fi * s + y) * s + x] = t.data()[(fi * s + sy as usize) * s + sx as usize];
                }
            }
        }
    }
    VisualClip::new(Tensor::new(t.shape(), out)?)
}

fn label_tensor(labels: &[[f64; NUM_CONCEPTS]], idx: &[usize]) -> Result<Tensor> {
    Tensor::new(&[idx.len(), NUM_CONCEPTS], idx.iter().flat_map(|&i| labels[i]).collect())
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Which {
    Visual,
    Auditory,
}

/// Generic SGD loop. `step` builds the loss for one mini-batch on a fresh tape.
fn fit(
    model: &mut Cccnn,
    n: usize,
    hp: &TrainParams,
    trainable: &[ParamId],
    mut step: impl FnMut(&Cccnn, &mut Tape, &[usize], u64, &mut PassStats) -> Result<Var>,
    mut after_epoch: impl FnMut(&Cccnn, &mut TrainReport) -> Result<()>,
) -> Result<TrainReport> {
    if n == 0 {
        return Err(Error::Invalid("training set is empty".into()));
    }
    let mut rng = seeded_rng(hp.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut report = TrainReport::default();
    for _ in 0..hp.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let groups = batches(&order, hp.batch_size);
        for b in &groups {
            let mut tape = Tape::new();
            let mut stats = PassStats::default();
            let loss = step(model, &mut tape, b, rng.gen(), &mut stats)?;
            total += tape.value(loss).data()[0];
            let grads = tape.backward(loss)?;
            hp.sgd.apply(&mut model.params, &grads, trainable)?;
            model.visual.apply_stats(&stats.visual);
            model.auditory.apply_stats(&stats.auditory);
        }
        report.losses.push(total / groups.len() as f64);
        after_epoch(model, &mut report)?;
    }
    Ok(report)
}

impl Cccnn {
    fn unimodal_logits(&self, tape: &mut Tape, which: Which, input: Tensor, mode: Mode, seed: u64, stats: &mut PassStats) -> Result<Var> {
        let (ch, head, st) = match which {
            Which::Visual => (&self.visual, &self.visual_head, &mut stats.visual),
            Which::Auditory => (&self.auditory, &self.auditory_head, &mut stats.auditory),
        };
        let x = tape.input(input)?;
        let y = ch.run(tape, &self.params, x, 0..ch.layers.len(), mode, seed, st)?;
        self.classifier_tape(tape, head, y)
    }

    /// Concept distributions from a unisensory channel and its head.
    pub fn classify_visual(&self, clips: &[&VisualClip]) -> Result<Vec<[f64; NUM_CONCEPTS]>> {
        self.classify(Which::Visual, visual_batch(clips)?)
    }

    pub fn classify_auditory(&self, maps: &[&MfccMap]) -> Result<Vec<[f64; NUM_CONCEPTS]>> {
        self.classify(Which::Auditory, auditory_batch(maps)?)
    }

    fn classify(&self, which: Which, input: Tensor) -> Result<Vec<[f64; NUM_CONCEPTS]>> {
        let mut tape = Tape::new();
        let logits = self.unimodal_logits(&mut tape, which, input, Mode::Infer, 0, &mut PassStats::default())?;
        let p = crate::nn::kernels::softmax_rows(tape.value(logits).data(), NUM_CONCEPTS);
        Ok(p.chunks(NUM_CONCEPTS).map(|r| r.try_into().unwrap()).collect())
    }

    fn accuracy_on(&self, which: Which, inputs: &[Tensor], labels: &[[f64; NUM_CONCEPTS]]) -> Result<f64> {
        let mut hits = 0;
        for (chunk, lab) in inputs.chunks(32).zip(labels.chunks(32)) {
            let probs = self.classify(which, Tensor::stack(chunk)?)?;
            hits += probs.iter().zip(lab).filter(|(p, l)| argmax(&p[..]) == argmax(&l[..])).count();
        }
        Ok(hits as f64 / inputs.len().max(1) as f64)
    }

    fn train_unimodal(
        &mut self,
        which: Which,
        inputs: Vec<Tensor>,
        labels: &[[f64; NUM_CONCEPTS]],
        val: Option<(Vec<Tensor>, &[[f64; NUM_CONCEPTS]])>,
        hp: &TrainParams,
        augment: impl Fn(&Tensor, &mut rand_chacha::ChaCha8Rng) -> Result<Tensor>,
    ) -> Result<TrainReport> {
        if inputs.len() != labels.len() {
            return Err(Error::Shape(format!("{} inputs for {} labels", inputs.len(), labels.len())));
        }
        let (ch, head) = match which {
            Which::Visual => (&self.visual, &self.visual_head),
            Which::Auditory => (&self.auditory, &self.auditory_head),
        };
        let mut trainable = ch.param_ids(0..ch.layers.len());
        trainable.extend(head.hidden.ids());
        trainable.extend(head.out.ids());
        let report = fit(
            self,
            inputs.len(),
            hp,
            &trainable,
            |m, tape, idx, seed, stats| {
                let mut rng = seeded_rng(seed);
                let items: Vec<Tensor> = idx
                    .iter()
                    .map(|&i| if hp.augment { augment(&inputs[i], &mut rng) } else { Ok(inputs[i].clone()) })
                    .collect::<Result<_>>()?;
                let logits = m.unimodal_logits(tape, which, Tensor::stack(&items)?, Mode::Train, seed, stats)?;
                tape.softmax_cross_entropy(logits, &label_tensor(labels, idx)?)
            },
            |m, r| {
                r.train_accuracy.push(m.accuracy_on(which, &inputs, labels)?);
                if let Some((vi, vl)) = &val {
                    r.val_accuracy.push(m.accuracy_on(which, vi, vl)?);
                }
                Ok(())
            },
        )?;
        match which {
            Which::Visual => self.trained.visual = true,
            Which::Auditory => self.trained.auditory = true,
        }
        Ok(report)
    }

    /// Trains the whole visual channel plus its classifier head on soft
    /// 7-way labels.
    pub fn train_unimodal_visual(
        &mut self,
        clips: &[VisualClip],
        labels: &[[f64; NUM_CONCEPTS]],
        validation: Option<(&[VisualClip], &[[f64; NUM_CONCEPTS]])>,
        hp: &TrainParams,
    ) -> Result<TrainReport> {
        let to_input = |c: &VisualClip| visual_batch(&[c]).map(|t| {
            let s = t.shape()[1..].to_vec();
            t.reshape(&s).expect("same element count")
        });
        let inputs = clips.iter().map(to_input).collect::<Result<Vec<_>>>()?;
        let val = match validation {
            Some((c, l)) => Some((c.iter().map(to_input).collect::<Result<Vec<_>>>()?, l)),
            None => None,
        };
        self.train_unimodal(Which::Visual, inputs, labels, val, hp, |t, rng| {
            let s = t.shape().to_vec();
            let clip = VisualClip::new(t.clone().reshape(&s[1..])?)?;
            augment_clip(&clip, rng)?.tensor().clone().reshape(&s)
        })
    }

    pub fn train_unimodal_auditory(
        &mut self,
        maps: &[MfccMap],
        labels: &[[f64; NUM_CONCEPTS]],
        validation: Option<(&[MfccMap], &[[f64; NUM_CONCEPTS]])>,
        hp: &TrainParams,
    ) -> Result<TrainReport> {
        let to_input = |m: &MfccMap| auditory_batch(&[m]).map(|t| {
            let s = t.shape()[1..].to_vec();
            t.reshape(&s).expect("same element count")
        });
        let inputs = maps.iter().map(to_input).collect::<Result<Vec<_>>>()?;
        let val = match validation {
            Some((m, l)) => Some((m.iter().map(to_input).collect::<Result<Vec<_>>>()?, l)),
            None => None,
        };
        self.train_unimodal(Which::Auditory, inputs, labels, val, hp, |t, _| Ok(t.clone()))
    }

    /// Fine-tunes the cross-channel, each channel's last layer, the joint
    /// layer and the regression head on (arousal in [0, 1], valence in
    /// [-1, 1]) targets. Everything else stays frozen.
    pub fn train_crossmodal_finetune(
        &mut self,
        clips: &[VisualClip],
        maps: &[MfccMap],
        targets: &[(f64, f64)],
        hp: &TrainParams,
    ) -> Result<TrainReport> {
        if !(self.trained.visual && self.trained.auditory) {
            return Err(Error::Invalid("fine-tuning needs both channels pre-trained".into()));
        }
        if clips.len() != maps.len() || clips.len() != targets.len() {
            return Err(Error::Shape(format!(
                "{} clips, {} MFCC maps, {} targets",
                clips.len(),
                maps.len(),
                targets.len()
            )));
        }
        let trainable = self.finetune_params();
        let gammas = (self.gamma_visual, self.gamma_auditory);
        let report = fit(
            self,
            clips.len(),
            hp,
            &trainable,
            |m, tape, idx, seed, stats| {
                let mut rng = seeded_rng(seed);
                let cs: Vec<VisualClip> = idx
                    .iter()
                    .map(|&i| if hp.augment { augment_clip(&clips[i], &mut rng) } else { Ok(clips[i].clone()) })
                    .collect::<Result<_>>()?;
                let batch = Batch {
                    visual: Some(visual_batch(&cs.iter().collect::<Vec<_>>())?),
                    auditory: Some(auditory_batch(&idx.iter().map(|&i| &maps[i]).collect::<Vec<_>>())?),
                };
                let trace = m.forward_tape(tape, &batch, gammas, PassMode::FINETUNE, seed, stats)?;
                let (a, v) = m.regression_tape(tape, trace.joint)?;
                let ta = Tensor::new(&[idx.len(), 1], idx.iter().map(|&i| 2.0 * targets[i].0 - 1.0).collect())?;
                let tv = Tensor::new(&[idx.len(), 1], idx.iter().map(|&i| targets[i].1).collect())?;
                let la = tape.mse(a, &ta)?;
                let lv = tape.mse(v, &tv)?;
                tape.add_losses(la, lv)
            },
            |_, _| Ok(()),
        )?;
        self.trained.crossmodal = true;
        Ok(report)
    }
}

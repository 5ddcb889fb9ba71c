use serde::{Deserialize, Serialize};

use super::channel::{Channel, StatUpdates};
use super::spec::ModelSpec;
use crate::error::{Error, Result};
use crate::frontend::{MfccMap, VisualClip};
use crate::nn::{seeded_rng, ConvGeom, Mode, ParamId, ParamStore, Tape, Var};
use crate::tensor::Tensor;

pub const DEFAULT_GAMMA_VISUAL: f64 = 0.7;
pub const DEFAULT_GAMMA_AUDITORY: f64 = 0.4;

/// Fully connected layer handles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fc {
    pub w: ParamId,
    pub b: ParamId,
}

impl Fc {
    pub fn build(store: &mut ParamStore, name: &str, inp: usize, out: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Self {
        let w = store.add_he(format!("{name}.w"), &[out, inp], inp, rng);
        let b = store.add(format!("{name}.b"), Tensor::zeros(&[out]));
        Self { w, b }
    }

    pub fn apply(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        tape.linear(x, w, b)
    }

    pub fn ids(&self) -> [ParamId; 2] {
        [self.w, self.b]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossChannel {
    pub proj_visual: Fc,
    pub proj_auditory: Fc,
    pub kernel: ParamId,
    pub bias: ParamId,
    pub feedback_visual: Fc,
    pub feedback_auditory: Fc,
}

impl CrossChannel {
    pub fn ids(&self) -> Vec<ParamId> {
        let mut v = vec![self.kernel, self.bias];
        for f in [&self.proj_visual, &self.proj_auditory, &self.feedback_visual, &self.feedback_auditory] {
            v.extend(f.ids());
        }
        v
    }
}

/// Hidden layer plus softmax output over the seven concepts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierHead {
    pub hidden: Fc,
    pub out: Fc,
}

/// Shared hidden layer with two independent tanh outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionHead {
    pub hidden: Fc,
    pub arousal: Fc,
    pub valence: Fc,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainedFlags {
    pub visual: bool,
    pub auditory: bool,
    pub crossmodal: bool,
}

/// Joint feature vector from the fusion layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpressionRepresentation {
    pub features: Vec<f64>,
    pub visual: bool,
    pub audio: bool,
}

/// Node handles of one forward pass through the whole network.
#[derive(Debug, Clone, Copy)]
pub struct Trace {
    pub pre_visual: Option<Var>,
    pub pre_auditory: Option<Var>,
    pub cross_visual: Option<Var>,
    pub cross_auditory: Option<Var>,
    /// Input of each channel's last layer.
    pub last_in_visual: Option<Var>,
    pub last_in_auditory: Option<Var>,
    pub features_visual: Option<Var>,
    pub features_auditory: Option<Var>,
    pub joint: Var,
}

/// Modes for the layers below the last layer (`body`) and everything from
/// the last layer on (`top`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PassMode {
    pub body: Mode,
    pub top: Mode,
}

impl PassMode {
    pub const INFER: PassMode = PassMode { body: Mode::Infer, top: Mode::Infer };
    pub const TRAIN: PassMode = PassMode { body: Mode::Train, top: Mode::Train };
    pub const FINETUNE: PassMode = PassMode { body: Mode::Infer, top: Mode::Train };
}

/// Batched network inputs: visual `[B, 1, F, S, S]`, auditory `[B, M, 1, 1, T]`.
#[derive(Debug, Clone, Default)]
pub struct Batch {
    pub visual: Option<Tensor>,
    pub auditory: Option<Tensor>,
}

impl Batch {
    pub fn size(&self) -> usize {
        self.visual.as_ref().or(self.auditory.as_ref()).map(|t| t.shape()[0]).unwrap_or(0)
    }
}

pub fn visual_batch(clips: &[&VisualClip]) -> Result<Tensor> {
    let t: Vec<Tensor> = clips.iter().map(|c| c.tensor().clone()).collect();
    let s = Tensor::stack(&t)?;
    let sh = s.shape().to_vec();
    s.reshape(&[sh[0], 1, sh[1], sh[2], sh[3]])
}

pub fn auditory_batch(maps: &[&MfccMap]) -> Result<Tensor> {
    let t: Vec<Tensor> = maps.iter().map(|m| m.tensor().clone()).collect();
    let s = Tensor::stack(&t)?;
    let sh = s.shape().to_vec();
    s.reshape(&[sh[0], sh[1], 1, 1, sh[2]])
}

/// Stats gathered during a training pass, per channel.
#[derive(Debug, Default)]
pub struct PassStats {
    pub visual: StatUpdates,
    pub auditory: StatUpdates,
}

/// The crossmodal convolutional network with its training heads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cccnn {
    pub spec: ModelSpec,
    pub params: ParamStore,
    pub visual: Channel,
    pub auditory: Channel,
    pub cross: CrossChannel,
    pub joint: Fc,
    pub visual_head: ClassifierHead,
    pub auditory_head: ClassifierHead,
    pub regression: RegressionHead,
    pub gamma_visual: f64,
    pub gamma_auditory: f64,
    pub trained: TrainedFlags,
}

fn check_gamma(g: f64, which: &str) -> Result<()> {
    if (0.0..=1.0).contains(&g) {
        Ok(())
    } else {
        Err(Error::Invalid(format!("{which} modulation factor {g} outside [0, 1]")))
    }
}

fn numel(s: &[usize]) -> usize {
    s.iter().product()
}

impl Cccnn {
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = seeded_rng(seed);
        let mut store = ParamStore::new();
        let visual = Channel::build(spec.visual.clone(), &mut store, &mut rng)?;
        let auditory = Channel::build(spec.auditory.clone(), &mut store, &mut rng)?;
        let pre_v = numel(&spec.visual.pre_last_shape()?);
        let pre_a = numel(&spec.auditory.pre_last_shape()?);
        let cs = &spec.cross;
        let cross_flat = cs.filters * cs.units;
        let cross = CrossChannel {
            proj_visual: Fc::build(&mut store, "cross.proj_visual", pre_v, cs.units, &mut rng),
            proj_auditory: Fc::build(&mut store, "cross.proj_auditory", pre_a, cs.units, &mut rng),
            kernel: store.add_he("cross.kernel", &[cs.filters, 2, 1, 3, 3], 18, &mut rng),
            bias: store.add("cross.bias", Tensor::zeros(&[cs.filters])),
            feedback_visual: Fc::build(&mut store, "cross.feedback_visual", cross_flat, pre_v, &mut rng),
            feedback_auditory: Fc::build(&mut store, "cross.feedback_auditory", cross_flat, pre_a, &mut rng),
        };
        let out_v = numel(&spec.visual.output_shape()?);
        let out_a = numel(&spec.auditory.output_shape()?);
        let joint = Fc::build(&mut store, "joint", out_v + out_a, spec.joint_units, &mut rng);
        let h = spec.head_hidden;
        let mut classifier = |name: &str, inp: usize, store: &mut ParamStore| ClassifierHead {
            hidden: Fc::build(store, &format!("{name}.hidden"), inp, h, &mut rng),
            out: Fc::build(store, &format!("{name}.out"), h, crate::affect::NUM_CONCEPTS, &mut rng),
        };
        let visual_head = classifier("visual_head", out_v, &mut store);
        let auditory_head = classifier("auditory_head", out_a, &mut store);
        let regression = RegressionHead {
            hidden: Fc::build(&mut store, "regression.hidden", spec.joint_units, h, &mut rng),
            arousal: Fc::build(&mut store, "regression.arousal", h, 1, &mut rng),
            valence: Fc::build(&mut store, "regression.valence", h, 1, &mut rng),
        };
        Ok(Self {
            spec,
            params: store,
            visual,
            auditory,
            cross,
            joint,
            visual_head,
            auditory_head,
            regression,
            gamma_visual: DEFAULT_GAMMA_VISUAL,
            gamma_auditory: DEFAULT_GAMMA_AUDITORY,
            trained: TrainedFlags::default(),
        })
    }

    pub fn set_gammas(&mut self, visual: f64, auditory: f64) -> Result<()> {
        check_gamma(visual, "visual")?;
        check_gamma(auditory, "auditory")?;
        self.gamma_visual = visual;
        self.gamma_auditory = auditory;
        Ok(())
    }

    /// Parameters that cross-modal fine-tuning may change.
    pub fn finetune_params(&self) -> Vec<ParamId> {
        let mut v = self.cross.ids();
        v.extend(self.visual.param_ids(self.visual.top()));
        v.extend(self.auditory.param_ids(self.auditory.top()));
        v.extend(self.joint.ids());
        for f in [&self.regression.hidden, &self.regression.arousal, &self.regression.valence] {
            v.extend(f.ids());
        }
        v
    }

    /// Cross-channel outputs reshaped to each channel's pre-last shape.
    /// A missing channel contributes a zero map and gets no feedback.
    pub fn cross_tape(
        &self,
        tape: &mut Tape,
        pre_v: Option<Var>,
        pre_a: Option<Var>,
        batch: usize,
    ) -> Result<(Option<Var>, Option<Var>)> {
        let cs = &self.spec.cross;
        let st = &self.params;
        let project = |tape: &mut Tape, pre: Option<Var>, fc: &Fc| -> Result<Var> {
            match pre {
                Some(p) => {
                    let f = tape.flatten(p)?;
                    let y = fc.apply(tape, st, f)?;
                    tape.relu(y)
                }
                None => tape.input(Tensor::zeros(&[batch, cs.units])),
            }
        };
        let pv = project(tape, pre_v, &self.cross.proj_visual)?;
        let pa = project(tape, pre_a, &self.cross.proj_auditory)?;
        let cat = tape.concat(&[pv, pa])?;
        let stacked = tape.reshape(cat, &[batch, 2, 1, cs.side, cs.side])?;
        let k = tape.param(st, self.cross.kernel);
        let b = tape.param(st, self.cross.bias);
        let c = tape.conv(stacked, k, b, ConvGeom::padded([0, 1, 1]))?;
        let c = tape.relu(c)?;
        let flat = tape.flatten(c)?;
        let feedback = |tape: &mut Tape, pre: Option<Var>, fc: &Fc| -> Result<Option<Var>> {
            let Some(p) = pre else { return Ok(None) };
            let shape = tape.value(p).shape().to_vec();
            let y = fc.apply(tape, st, flat)?;
            let y = tape.relu(y)?;
            Ok(Some(tape.reshape(y, &shape)?))
        };
        let cv = feedback(tape, pre_v, &self.cross.feedback_visual)?;
        let ca = feedback(tape, pre_a, &self.cross.feedback_auditory)?;
        Ok((cv, ca))
    }

    /// Full forward pass on the tape.
    pub fn forward_tape(
        &self,
        tape: &mut Tape,
        batch: &Batch,
        gammas: (f64, f64),
        mode: PassMode,
        seed: u64,
        stats: &mut PassStats,
    ) -> Result<Trace> {
        check_gamma(gammas.0, "visual")?;
        check_gamma(gammas.1, "auditory")?;
        let n = batch.size();
        if n == 0 {
            return Err(Error::Invalid("forward pass needs at least one modality".into()));
        }
        let st = &self.params;
        let pre_v = match &batch.visual {
            Some(x) => {
                let x = tape.input(x.clone())?;
                Some(self.visual.run(tape, st, x, self.visual.body(), mode.body, seed, &mut stats.visual)?)
            }
            None => None,
        };
        let pre_a = match &batch.auditory {
            Some(x) => {
                let x = tape.input(x.clone())?;
                Some(self.auditory.run(tape, st, x, self.auditory.body(), mode.body, seed ^ 1, &mut stats.auditory)?)
            }
            None => None,
        };
        // a channel with zero gamma bypasses the cross-channel entirely
        let gv = if pre_v.is_some() { gammas.0 } else { 0.0 };
        let ga = if pre_a.is_some() { gammas.1 } else { 0.0 };
        let (mut cross_v, mut cross_a) = (None, None);
        if gv > 0.0 || ga > 0.0 {
            (cross_v, cross_a) = self.cross_tape(tape, pre_v, pre_a, n)?;
        }
        let modulate = |tape: &mut Tape, pre: Option<Var>, cc: Option<Var>, g: f64| -> Result<Option<Var>> {
            match (pre, cc) {
                (Some(p), Some(c)) if g > 0.0 => {
                    let s = tape.scale(c, g)?;
                    Ok(Some(tape.add(s, p)?))
                }
                (p, _) => Ok(p),
            }
        };
        let m_v = modulate(tape, pre_v, cross_v, gv)?;
        let m_a = modulate(tape, pre_a, cross_a, ga)?;
        let feat_v = match m_v {
            Some(m) => Some(self.visual.run(tape, st, m, self.visual.top(), mode.top, seed, &mut stats.visual)?),
            None => None,
        };
        let feat_a = match m_a {
            Some(m) => Some(self.auditory.run(tape, st, m, self.auditory.top(), mode.top, seed ^ 1, &mut stats.auditory)?),
            None => None,
        };
        let flat = |tape: &mut Tape, f: Option<Var>, width: usize| -> Result<Var> {
            match f {
                Some(v) => tape.flatten(v),
                None => tape.input(Tensor::zeros(&[n, width])),
            }
        };
        let fv = flat(tape, feat_v, numel(&self.spec.visual.output_shape()?))?;
        let fa = flat(tape, feat_a, numel(&self.spec.auditory.output_shape()?))?;
        let cat = tape.concat(&[fv, fa])?;
        let j = self.joint.apply(tape, st, cat)?;
        let joint = tape.relu(j)?;
        Ok(Trace {
            pre_visual: pre_v,
            pre_auditory: pre_a,
            cross_visual: cross_v,
            cross_auditory: cross_a,
            last_in_visual: m_v,
            last_in_auditory: m_a,
            features_visual: feat_v,
            features_auditory: feat_a,
            joint,
        })
    }

    /// Unisensory visual pass: (final features, pre-last activation), both
    /// with a leading batch axis of 1.
    pub fn visual_forward(&self, clip: &VisualClip, mode: Mode) -> Result<(Tensor, Tensor)> {
        let mut tape = Tape::new();
        let x = tape.input(visual_batch(&[clip])?)?;
        let mut s = StatUpdates::new();
        let pre = self.visual.run(&mut tape, &self.params, x, self.visual.body(), mode, 0, &mut s)?;
        let out = self.visual.run(&mut tape, &self.params, pre, self.visual.top(), mode, 0, &mut s)?;
        Ok((tape.value(out).clone(), tape.value(pre).clone()))
    }

    pub fn auditory_forward(&self, mfcc: &MfccMap, mode: Mode) -> Result<(Tensor, Tensor)> {
        let mut tape = Tape::new();
        let x = tape.input(auditory_batch(&[mfcc])?)?;
        let mut s = StatUpdates::new();
        let pre = self.auditory.run(&mut tape, &self.params, x, self.auditory.body(), mode, 1, &mut s)?;
        let out = self.auditory.run(&mut tape, &self.params, pre, self.auditory.top(), mode, 1, &mut s)?;
        Ok((tape.value(out).clone(), tape.value(pre).clone()))
    }

    /// Cross-channel integration from pre-last activations in inference
    /// mode. At least one activation must be given.
    pub fn cross_forward(
        &self,
        pre_visual: Option<&Tensor>,
        pre_auditory: Option<&Tensor>,
        gamma_visual: f64,
        gamma_auditory: f64,
    ) -> Result<CrossOutput> {
        check_gamma(gamma_visual, "visual")?;
        check_gamma(gamma_auditory, "auditory")?;
        let n = pre_visual.or(pre_auditory).map(|t| t.shape()[0]).ok_or_else(|| {
            Error::Invalid("cross_forward needs at least one channel activation".into())
        })?;
        let mut tape = Tape::new();
        let pv = pre_visual.map(|t| tape.input(t.clone())).transpose()?;
        let pa = pre_auditory.map(|t| tape.input(t.clone())).transpose()?;
        let gv = if pv.is_some() { gamma_visual } else { 0.0 };
        let ga = if pa.is_some() { gamma_auditory } else { 0.0 };
        let (mut cv, mut ca) = (None, None);
        if gv > 0.0 || ga > 0.0 {
            (cv, ca) = self.cross_tape(&mut tape, pv, pa, n)?;
        }
        let st = &self.params;
        let mut stats = StatUpdates::new();
        let mut finish = |tape: &mut Tape, pre: Option<Var>, cc: Option<Var>, g: f64, ch: &Channel, seed: u64|
         -> Result<(Option<Var>, Option<Var>)> {
            let Some(p) = pre else { return Ok((None, None)) };
            let m = match cc {
                Some(c) if g > 0.0 => {
                    let s = tape.scale(c, g)?;
                    tape.add(s, p)?
                }
                _ => p,
            };
            let out = ch.run(tape, st, m, ch.top(), Mode::Infer, seed, &mut stats)?;
            Ok((Some(m), Some(out)))
        };
        let (mv, fv) = finish(&mut tape, pv, cv, gv, &self.visual, 0)?;
        let (ma, fa) = finish(&mut tape, pa, ca, ga, &self.auditory, 1)?;
        let flat = |tape: &mut Tape, f: Option<Var>, width: usize| -> Result<Var> {
            match f {
                Some(v) => tape.flatten(v),
                None => tape.input(Tensor::zeros(&[n, width])),
            }
        };
        let a = flat(&mut tape, fv, numel(&self.spec.visual.output_shape()?))?;
        let b = flat(&mut tape, fa, numel(&self.spec.auditory.output_shape()?))?;
        let cat = tape.concat(&[a, b])?;
        let j = self.joint.apply(&mut tape, st, cat)?;
        let j = tape.relu(j)?;
        let get = |v: Option<Var>| v.map(|v| tape.value(v).clone());
        Ok(CrossOutput {
            visual_features: get(fv),
            auditory_features: get(fa),
            last_in_visual: get(mv),
            last_in_auditory: get(ma),
            cross_visual: get(cv),
            cross_auditory: get(ca),
            joint: tape.value(j).clone(),
        })
    }

    /// Inference-mode joint representations for a batch, one per item.
    pub fn represent(&self, batch: &Batch) -> Result<Vec<ExpressionRepresentation>> {
        let mut tape = Tape::new();
        let trace = self.forward_tape(
            &mut tape,
            batch,
            (self.gamma_visual, self.gamma_auditory),
            PassMode::INFER,
            0,
            &mut PassStats::default(),
        )?;
        let j = tape.value(trace.joint);
        let width = j.shape()[1];
        Ok(j.data()
            .chunks(width)
            .map(|r| ExpressionRepresentation {
                features: r.to_vec(),
                visual: batch.visual.is_some(),
                audio: batch.auditory.is_some(),
            })
            .collect())
    }

    /// Regression head outputs on the tape: (arousal, valence), each `[B, 1]`
    /// in [-1, 1].
    pub fn regression_tape(&self, tape: &mut Tape, joint: Var) -> Result<(Var, Var)> {
        let h = self.regression.hidden.apply(tape, &self.params, joint)?;
        let h = tape.relu(h)?;
        let a = self.regression.arousal.apply(tape, &self.params, h)?;
        let a = tape.activate(a, crate::nn::Activation::Tanh)?;
        let v = self.regression.valence.apply(tape, &self.params, h)?;
        let v = tape.activate(v, crate::nn::Activation::Tanh)?;
        Ok((a, v))
    }

    /// Classifier logits on flattened channel features.
    pub fn classifier_tape(&self, tape: &mut Tape, head: &ClassifierHead, features: Var) -> Result<Var> {
        let f = tape.flatten(features)?;
        let h = head.hidden.apply(tape, &self.params, f)?;
        let h = tape.relu(h)?;
        head.out.apply(tape, &self.params, h)
    }

    /// Fine-tuned (arousal in [0, 1], valence in [-1, 1]) per batch item.
    pub fn predict_regression(&self, batch: &Batch) -> Result<Vec<(f64, f64)>> {
        let mut tape = Tape::new();
        let trace = self.forward_tape(
            &mut tape,
            batch,
            (self.gamma_visual, self.gamma_auditory),
            PassMode::INFER,
            0,
            &mut PassStats::default(),
        )?;
        let (a, v) = self.regression_tape(&mut tape, trace.joint)?;
        Ok(tape
            .value(a)
            .data()
            .iter()
            .zip(tape.value(v).data())
            .map(|(a, v)| ((a + 1.0) / 2.0, *v))
            .collect())
    }
}

/// Outputs of [`Cccnn::cross_forward`].
#[derive(Debug, Clone, PartialEq)]
pub struct CrossOutput {
    pub visual_features: Option<Tensor>,
    pub auditory_features: Option<Tensor>,
    pub last_in_visual: Option<Tensor>,
    pub last_in_auditory: Option<Tensor>,
    pub cross_visual: Option<Tensor>,
    pub cross_auditory: Option<Tensor>,
    pub joint: Tensor,
}

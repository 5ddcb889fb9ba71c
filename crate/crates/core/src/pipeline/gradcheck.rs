//! Finite-difference checks of every differentiable layer and of a whole
//! stacked model, as run by the `gradcheck` command.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cccnn::{Batch, Cccnn, ModelSpec, PassMode, PassStats};
use crate::error::Result;
use crate::nn::gradcheck::relative_error;
use crate::nn::ops::BN_EPSILON;
use crate::nn::{finite_diff_check, seeded_rng, ConvGeom, Tape, Var, DEFAULT_EPSILON};
use crate::tensor::Tensor;

/// Largest relative error any check may show.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
/// Central-difference step of the whole-model check; smaller than the layer
/// step so that probes rarely straddle a ReLU or max-pool switch.
pub const MODEL_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckCase {
    pub name: String,
    pub max_rel_error: f64,
    pub checked: usize,
}

impl GradcheckCase {
    pub fn passed(&self) -> bool {
        self.max_rel_error < GRADCHECK_TOLERANCE
    }
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen_range(-scale..scale))
}

fn case(name: &str, point: &[Tensor], f: impl Fn(&mut Tape, &[Var]) -> Result<Var>) -> Result<GradcheckCase> {
    let r = finite_diff_check(point, DEFAULT_EPSILON, None, f)?;
    Ok(GradcheckCase { name: name.into(), max_rel_error: r.max_rel_error, checked: r.checked })
}

/// Layer-level checks; each builds a quadratic loss against a random target.
pub fn layer_cases(seed: u64) -> Result<Vec<GradcheckCase>> {
    let mut rng = seeded_rng(seed);
    let mut out = Vec::new();

    let x = uniform(&mut rng, &[2, 2, 3, 5, 5], 1.0);
    let k = uniform(&mut rng, &[3, 2, 2, 3, 3], 0.5);
    let b = uniform(&mut rng, &[3], 0.5);
    let tgt = uniform(&mut rng, &[2, 3, 2, 5, 5], 1.0);
    out.push(case("conv3d", &[x, k, b], |t, v| {
        let y = t.conv(v[0], v[1], v[2], ConvGeom::padded([0, 1, 1]))?;
        t.mse(y, &tgt)
    })?);

    let x = uniform(&mut rng, &[2, 4, 1, 1, 9], 1.0);
    let k = uniform(&mut rng, &[3, 4, 1, 1, 3], 0.5);
    let b = uniform(&mut rng, &[3], 0.5);
    let tgt = uniform(&mut rng, &[2, 3, 1, 1, 7], 1.0);
    out.push(case("conv1d", &[x, k, b], |t, v| {
        let y = t.conv(v[0], v[1], v[2], ConvGeom::default())?;
        t.mse(y, &tgt)
    })?);

    let x = uniform(&mut rng, &[1, 2, 3, 5, 5], 1.0);
    let ku = uniform(&mut rng, &[2, 2, 2, 3, 3], 1.0);
    let ki = uniform(&mut rng, &[2, 2, 2, 3, 3], 0.3);
    let bu = uniform(&mut rng, &[2], 1.0);
    let bi = Tensor::full(&[2], 0.2);
    let tgt = uniform(&mut rng, &[1, 2, 2, 3, 3], 1.0);
    out.push(case("shunting", &[x, ku, ki, bu, bi], |t, v| {
        let u = t.conv(v[0], v[1], v[3], ConvGeom::default())?;
        let u = t.relu(u)?;
        let i = t.conv(v[0], v[2], v[4], ConvGeom::default())?;
        let i = t.relu(i)?;
        let s = t.shunting(u, i, 1.0)?;
        t.mse(s, &tgt)
    })?);

    let x = uniform(&mut rng, &[3, 5], 1.0);
    let w = uniform(&mut rng, &[4, 5], 0.5);
    let b = uniform(&mut rng, &[4], 0.5);
    let tgt = uniform(&mut rng, &[3, 4], 1.0);
    out.push(case("fc", &[x, w, b], |t, v| {
        let y = t.linear(v[0], v[1], v[2])?;
        t.mse(y, &tgt)
    })?);

    let x = uniform(&mut rng, &[4, 3, 1, 2, 2], 1.0);
    let g = uniform(&mut rng, &[3], 1.0).map(|v| v + 1.5);
    let bt = uniform(&mut rng, &[3], 0.5);
    let tgt = uniform(&mut rng, &[4, 3, 1, 2, 2], 1.0);
    out.push(case("batchnorm", &[x, g, bt], |t, v| {
        let (y, _, _) = t.batch_norm_train(v[0], v[1], v[2], BN_EPSILON)?;
        t.mse(y, &tgt)
    })?);

    let x = uniform(&mut rng, &[2, 2, 2, 4, 4], 1.0);
    let tgt = uniform(&mut rng, &[2, 2, 1, 2, 2], 1.0);
    out.push(case("maxpool", &[x], |t, v| {
        let y = t.max_pool(v[0], [2, 2, 2], [2, 2, 2])?;
        t.mse(y, &tgt)
    })?);

    let logits = uniform(&mut rng, &[3, 7], 2.0);
    let soft = Tensor::from_fn(&[3, 7], |i| [0.1, 0.0, 0.3, 0.2, 0.1, 0.2, 0.1][i % 7]);
    out.push(case("softmax_cross_entropy", &[logits], |t, v| t.softmax_cross_entropy(v[0], &soft))?);

    let pred = uniform(&mut rng, &[4, 2], 1.0);
    let tgt = uniform(&mut rng, &[4, 2], 1.0);
    out.push(case("mse", &[pred], |t, v| t.mse(v[0], &tgt))?);
    Ok(out)
}

/// Checks every parameter tensor of a freshly initialized model through the
/// full stacked forward pass (both channels, cross-channel, joint layer and
/// all heads) in training mode, probing at most `per_tensor` elements each.
pub fn model_case(profile: &str, seed: u64, per_tensor: usize) -> Result<GradcheckCase> {
    let mut model = Cccnn::new(ModelSpec::by_name(profile)?, seed)?;
    let mut rng = seeded_rng(seed ^ 0xA5A5);
    // Zero-initialised biases in front of dead units sit exactly on a ReLU
    // kink; jitter every parameter so the check point is generic.
    for id in model.params.ids().collect::<Vec<_>>() {
        for w in model.params.get_mut(id).data_mut() {
            *w += rng.gen_range(-0.05..0.05);
        }
    }
    let [_, f, s, _] = model.spec.visual.input;
    let [m, _, _, tlen] = model.spec.auditory.input;
    let batch = Batch {
        visual: Some(Tensor::from_fn(&[2, 1, f, s, s], |_| rng.gen_range(0.0..1.0))),
        auditory: Some(Tensor::from_fn(&[2, m, 1, 1, tlen], |_| rng.gen_range(-1.0..1.0))),
    };
    let class_target = Tensor::from_fn(&[2, 7], |i| if i % 7 == (i / 7) * 3 { 1.0 } else { 0.0 });
    let av_target = Tensor::from_fn(&[2, 1], |i| 0.4 - 0.5 * i as f64);
    let gammas = (model.gamma_visual, model.gamma_auditory);
    let loss_of = |model: &Cccnn, tape: &mut Tape| -> Result<Var> {
        let trace = model.forward_tape(tape, &batch, gammas, PassMode::TRAIN, 17, &mut PassStats::default())?;
        let (a, v) = model.regression_tape(tape, trace.joint)?;
        let la = tape.mse(a, &av_target)?;
        let lv = tape.mse(v, &av_target)?;
        let mut loss = tape.add_losses(la, lv)?;
        for (head, feats) in [(&model.visual_head, trace.features_visual), (&model.auditory_head, trace.features_auditory)] {
            if let Some(fv) = feats {
                let logits = model.classifier_tape(tape, head, fv)?;
                let ce = tape.softmax_cross_entropy(logits, &class_target)?;
                loss = tape.add_losses(loss, ce)?;
            }
        }
        Ok(loss)
    };
    let eval = |model: &Cccnn| -> Result<f64> {
        let mut tape = Tape::new();
        let l = loss_of(model, &mut tape)?;
        Ok(tape.value(l).data()[0])
    };
    let mut tape = Tape::new();
    let loss = loss_of(&model, &mut tape)?;
    let grads = tape.backward(loss)?;
    let base = eval(&model)?;
    // Round-off level of a central difference of this loss; below
    // `noise / GRADCHECK_TOLERANCE` a relative error is not resolvable, so
    // such elements must agree to within `noise` absolutely.
    let noise = 8.0 * f64::EPSILON * base.abs().max(1.0) / MODEL_EPSILON;
    let mut worst = 0.0f64;
    let mut checked = 0;
    for id in model.params.ids().collect::<Vec<_>>() {
        let len = model.params.get(id).len();
        let analytic = grads.param(id).unwrap_or_else(|| Tensor::zeros(model.params.get(id).shape()));
        let step = len.div_ceil(per_tensor.max(1)).max(1);
        for ei in (0..len).step_by(step) {
            let orig = model.params.get(id).data()[ei];
            model.params.get_mut(id).data_mut()[ei] = orig + MODEL_EPSILON;
            let plus = eval(&model)?;
            model.params.get_mut(id).data_mut()[ei] = orig - MODEL_EPSILON;
            let minus = eval(&model)?;
            model.params.get_mut(id).data_mut()[ei] = orig;
            let numeric = (plus - minus) / (2.0 * MODEL_EPSILON);
            let a = analytic.data()[ei];
            let e = if a.abs().max(numeric.abs()) < noise / GRADCHECK_TOLERANCE {
                (a - numeric).abs() / noise * GRADCHECK_TOLERANCE
            } else {
                relative_error(a, numeric)
            };
            worst = worst.max(e);
            checked += 1;
        }
    }
    Ok(GradcheckCase { name: format!("model:{profile}"), max_rel_error: worst, checked })
}

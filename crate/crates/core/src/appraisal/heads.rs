//! MLP read-outs applied to Perception GWR prototypes.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::affect::{Annotation, NUM_CONCEPTS};
use crate::cccnn::Fc;
use crate::error::{Error, Result};
use crate::nn::kernels::softmax_rows;
use crate::nn::{seeded_rng, Activation, ParamId, ParamStore, SgdL2, Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub sgd: SgdL2,
}

impl Default for HeadParams {
    fn default() -> Self {
        Self { hidden: 32, epochs: 300, batch_size: 16, sgd: SgdL2 { learning_rate: 0.05, l2: 1e-4 } }
    }
}

/// Two MLPs on standardized prototypes: an arousal/valence regressor
/// (sigmoid and tanh outputs) and a concept classifier (softmax).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppraisalHeads {
    pub params: ParamStore,
    /// Per-feature shift and scale applied before both MLPs.
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
    pub av_hidden: Fc,
    pub arousal: Fc,
    pub valence: Fc,
    pub concept_hidden: Fc,
    pub concept: Fc,
    pub trained: bool,
}

struct Outputs {
    arousal: Var,
    valence: Var,
    logits: Var,
}

impl AppraisalHeads {
    pub fn new(dim: usize, hidden: usize, seed: u64) -> Result<Self> {
        if dim == 0 || hidden == 0 {
            return Err(Error::Invalid("head input and hidden widths must be positive".into()));
        }
        let mut rng = seeded_rng(seed);
        let mut p = ParamStore::new();
        let av_hidden = Fc::build(&mut p, "av.hidden", dim, hidden, &mut rng);
        let arousal = Fc::build(&mut p, "av.arousal", hidden, 1, &mut rng);
        let valence = Fc::build(&mut p, "av.valence", hidden, 1, &mut rng);
        let concept_hidden = Fc::build(&mut p, "concept.hidden", dim, hidden, &mut rng);
        let concept = Fc::build(&mut p, "concept.out", hidden, NUM_CONCEPTS, &mut rng);
        Ok(Self {
            params: p,
            shift: vec![0.0; dim],
            scale: vec![1.0; dim],
            av_hidden,
            arousal,
            valence,
            concept_hidden,
            concept,
            trained: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    fn standardize(&self, rows: &[&[f64]]) -> Result<Tensor> {
        let d = self.dim();
        let mut data = Vec::with_capacity(rows.len() * d);
        for r in rows {
            if r.len() != d {
                return Err(Error::Shape(format!("heads expect {d}-dimensional prototypes, got {}", r.len())));
            }
            data.extend(r.iter().zip(&self.shift).zip(&self.scale).map(|((x, s), k)| (x - s) * k));
        }
        Tensor::new(&[rows.len(), d], data)
    }

    fn forward(&self, tape: &mut Tape, x: Var) -> Result<Outputs> {
        let p = &self.params;
        let h = self.av_hidden.apply(tape, p, x)?;
        let h = tape.relu(h)?;
        let a = self.arousal.apply(tape, p, h)?;
        let arousal = tape.activate(a, Activation::Sigmoid)?;
        let v = self.valence.apply(tape, p, h)?;
        let valence = tape.activate(v, Activation::Tanh)?;
        let hc = self.concept_hidden.apply(tape, p, x)?;
        let hc = tape.relu(hc)?;
        let logits = self.concept.apply(tape, p, hc)?;
        Ok(Outputs { arousal, valence, logits })
    }

    /// Fits both MLPs on (prototype, appraisal target) pairs.
    pub fn train(&mut self, inputs: &[Vec<f64>], targets: &[Annotation], hp: &HeadParams, seed: u64) -> Result<Vec<f64>> {
        if inputs.is_empty() {
            return Err(Error::Invalid("head training set is empty".into()));
        }
        if inputs.len() != targets.len() {
            return Err(Error::Shape(format!("{} prototypes for {} targets", inputs.len(), targets.len())));
        }
        let d = self.dim();
        let n = inputs.len() as f64;
        for i in 0..d {
            let m = inputs.iter().map(|x| x[i]).sum::<f64>() / n;
            let v = inputs.iter().map(|x| (x[i] - m).powi(2)).sum::<f64>() / n;
            self.shift[i] = m;
            self.scale[i] = if v > 1e-12 { 1.0 / v.sqrt() } else { 1.0 };
        }
        let trainable: Vec<ParamId> = self.params.ids().collect();
        let mut rng = seeded_rng(seed);
        let mut order: Vec<usize> = (0..inputs.len()).collect();
        let mut losses = Vec::with_capacity(hp.epochs);
        for _ in 0..hp.epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            let chunks: Vec<&[usize]> = order.chunks(hp.batch_size.max(1)).collect();
            for idx in &chunks {
                let rows: Vec<&[f64]> = idx.iter().map(|&i| inputs[i].as_slice()).collect();
                let mut tape = Tape::new();
                let x = tape.input(self.standardize(&rows)?)?;
                let out = self.forward(&mut tape, x)?;
                let b = idx.len();
                let ta = Tensor::new(&[b, 1], idx.iter().map(|&i| targets[i].arousal).collect())?;
                let tv = Tensor::new(&[b, 1], idx.iter().map(|&i| targets[i].valence).collect())?;
                let tc = Tensor::new(&[b, NUM_CONCEPTS], idx.iter().flat_map(|&i| targets[i].concept.one_hot()).collect())?;
                let la = tape.mse(out.arousal, &ta)?;
                let lv = tape.mse(out.valence, &tv)?;
                let lc = tape.softmax_cross_entropy(out.logits, &tc)?;
                let l = tape.add_losses(la, lv)?;
                let loss = tape.add_losses(l, lc)?;
                total += tape.value(loss).data()[0];
                let grads = tape.backward(loss)?;
                hp.sgd.apply(&mut self.params, &grads, &trainable)?;
            }
            losses.push(total / chunks.len() as f64);
        }
        self.trained = true;
        Ok(losses)
    }

    fn check_trained(&self) -> Result<()> {
        if self.trained {
            Ok(())
        } else {
            Err(Error::Invalid("appraisal heads have not been trained".into()))
        }
    }

    /// (arousal in [0, 1], valence in [-1, 1]).
    pub fn predict_av(&self, prototype: &[f64]) -> Result<(f64, f64)> {
        self.check_trained()?;
        let mut tape = Tape::new();
        let x = tape.input(self.standardize(&[prototype])?)?;
        let out = self.forward(&mut tape, x)?;
        Ok((tape.value(out.arousal).data()[0], tape.value(out.valence).data()[0]))
    }

    pub fn predict_concept(&self, prototype: &[f64]) -> Result<[f64; NUM_CONCEPTS]> {
        self.check_trained()?;
        let mut tape = Tape::new();
        let x = tape.input(self.standardize(&[prototype])?)?;
        let out = self.forward(&mut tape, x)?;
        let p = softmax_rows(tape.value(out.logits).data(), NUM_CONCEPTS);
        Ok(p.try_into().expect("one row"))
    }
}

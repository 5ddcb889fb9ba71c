//! Recurrent Growing-When-Required network with K temporal contexts.

mod export;

pub use export::{to_csv, to_dot, CSV_HEADER_PREFIX};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::affect::{Concept, NUM_CONCEPTS};
use crate::error::{Error, Result};
use crate::nn::seeded_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GwrParams {
    /// Insertion threshold on activity.
    pub a_t: f64,
    /// Firing threshold on habituation.
    pub h_t: f64,
    pub eps_b: f64,
    pub eps_n: f64,
    pub tau_b: f64,
    pub tau_n: f64,
    pub kappa: f64,
    pub h_floor: f64,
    /// `alpha[0]` weighs the sample distance, `alpha[k]` context k. K = len - 1.
    pub alpha: Vec<f64>,
    pub beta: f64,
    pub max_edge_age: u32,
}

impl Default for GwrParams {
    fn default() -> Self {
        Self {
            a_t: 0.35,
            h_t: 0.1,
            eps_b: 0.1,
            eps_n: 0.01,
            tau_b: 0.3,
            tau_n: 0.1,
            kappa: 1.05,
            h_floor: 1e-6,
            alpha: vec![0.5, 0.3, 0.2],
            beta: 0.7,
            max_edge_age: 100,
        }
    }
}

impl GwrParams {
    pub fn with_threshold(a_t: f64, max_edge_age: u32) -> Self {
        Self { a_t, max_edge_age, ..Self::default() }
    }

    pub fn contexts(&self) -> usize {
        self.alpha.len().saturating_sub(1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(m));
        if self.alpha.is_empty() || self.alpha.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return bad(format!("alpha weights must be non-empty and non-negative, got {:?}", self.alpha));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return bad(format!("beta must lie in [0, 1], got {}", self.beta));
        }
        for (name, v) in [("eps_b", self.eps_b), ("eps_n", self.eps_n), ("tau_b", self.tau_b), ("tau_n", self.tau_n)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if !(self.h_floor > 0.0 && self.h_floor < 1.0) {
            return bad(format!("h_floor must lie in (0, 1), got {}", self.h_floor));
        }
        if !(self.a_t.is_finite() && self.h_t.is_finite() && self.kappa.is_finite()) {
            return bad("thresholds must be finite".into());
        }
        Ok(())
    }
}

/// Running sums of the appraisals a neuron has won.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationAcc {
    pub count: u64,
    pub arousal_sum: f64,
    pub valence_sum: f64,
    pub concept_mass: [f64; NUM_CONCEPTS],
}

impl Default for AnnotationAcc {
    fn default() -> Self {
        Self { count: 0, arousal_sum: 0.0, valence_sum: 0.0, concept_mass: [0.0; NUM_CONCEPTS] }
    }
}

impl AnnotationAcc {
    pub fn add(&mut self, s: &AnnotationSample) {
        self.count += 1;
        self.arousal_sum += s.arousal;
        self.valence_sum += s.valence;
        for (m, p) in self.concept_mass.iter_mut().zip(s.concepts) {
            *m += p;
        }
    }

    pub fn mean_arousal(&self) -> Option<f64> {
        (self.count > 0).then(|| self.arousal_sum / self.count as f64)
    }

    pub fn mean_valence(&self) -> Option<f64> {
        (self.count > 0).then(|| self.valence_sum / self.count as f64)
    }

    /// Concept with the largest accumulated mass (lowest index on ties).
    pub fn concept(&self) -> Option<Concept> {
        if self.count == 0 {
            return None;
        }
        let mut best = 0;
        for (i, m) in self.concept_mass.iter().enumerate() {
            if *m > self.concept_mass[best] {
                best = i;
            }
        }
        Concept::from_index(best)
    }
}

/// Appraisal folded into the winning neuron: arousal, valence and a concept
/// distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnotationSample {
    pub arousal: f64,
    pub valence: f64,
    pub concepts: [f64; NUM_CONCEPTS],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GwrNeuron {
    pub weight: Vec<f64>,
    pub contexts: Vec<Vec<f64>>,
    pub habituation: f64,
    pub creation_step: u64,
    pub last_bmu_step: Option<u64>,
    pub annotation: AnnotationAcc,
}

impl GwrNeuron {
    pub fn new(weight: Vec<f64>, contexts: Vec<Vec<f64>>, step: u64) -> Self {
        Self { weight, contexts, habituation: 1.0, creation_step: step, last_bmu_step: None, annotation: AnnotationAcc::default() }
    }
}

/// Undirected edge with `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub age: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepEvent {
    /// The network was empty: two neurons were created at the sample.
    Seeded,
    Adapted,
    /// A neuron was inserted at this index.
    Inserted(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// Winner index, valid after the step's removals.
    pub bmu: usize,
    pub second: usize,
    pub distance: f64,
    pub activity: f64,
    /// Winner habituation at decision time.
    pub bmu_habituation: f64,
    pub event: StepEvent,
    pub removed_edges: usize,
    pub removed_neurons: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bmu {
    pub index: usize,
    pub distance: f64,
    /// Runner-up; equals `index` when the network holds one neuron.
    pub second: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GwrNetwork {
    dim: usize,
    params: GwrParams,
    neurons: Vec<GwrNeuron>,
    edges: Vec<Edge>,
    global_contexts: Vec<Vec<f64>>,
    /// Weight and contexts of the previous winner, captured after its update.
    previous_bmu: Option<(Vec<f64>, Vec<Vec<f64>>)>,
    step: u64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// One habituation update: `h + tau*kappa*(1-h) - tau`, kept in `[floor, 1]`.
pub fn habituate(h: f64, tau: f64, kappa: f64, floor: f64) -> f64 {
    (h + tau * kappa * (1.0 - h) - tau).clamp(floor, 1.0)
}

impl GwrNetwork {
    /// An empty network; the first `step` seeds it.
    pub fn new(dim: usize, params: GwrParams) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Invalid("GWR input dimension must be positive".into()));
        }
        params.validate()?;
        let k = params.contexts();
        Ok(Self {
            dim,
            params,
            neurons: Vec::new(),
            edges: Vec::new(),
            global_contexts: vec![vec![0.0; dim]; k],
            previous_bmu: None,
            step: 0,
        })
    }

    /// A network holding two connected neurons at `a` and `b`, contexts zero.
    pub fn with_initial(a: &[f64], b: &[f64], params: GwrParams) -> Result<Self> {
        let mut net = Self::new(a.len(), params)?;
        net.check_dim(b)?;
        net.seed(a, b);
        Ok(net)
    }

    /// Assembles a network from explicit state. `previous_bmu` names the
    /// neuron whose weight and contexts drive the next context update.
    pub fn from_parts(
        params: GwrParams,
        neurons: Vec<GwrNeuron>,
        edges: Vec<Edge>,
        global_contexts: Vec<Vec<f64>>,
        previous_bmu: Option<usize>,
    ) -> Result<Self> {
        let first = neurons.first().ok_or_else(|| Error::Invalid("network needs at least one neuron".into()))?;
        let mut net = Self::new(first.weight.len(), params)?;
        let k = net.params.contexts();
        if global_contexts.len() != k || global_contexts.iter().any(|c| c.len() != net.dim) {
            return Err(Error::Shape(format!("expected {k} global contexts of size {}", net.dim)));
        }
        for (i, n) in neurons.iter().enumerate() {
            if n.weight.len() != net.dim || n.contexts.len() != k || n.contexts.iter().any(|c| c.len() != net.dim) {
                return Err(Error::Shape(format!("neuron {i} does not match the network dimensions")));
            }
            if !(n.habituation > 0.0 && n.habituation <= 1.0) {
                return Err(Error::Invalid(format!("neuron {i} habituation {} outside (0, 1]", n.habituation)));
            }
        }
        let mut edges: Vec<Edge> = edges
            .into_iter()
            .map(|e| {
                let (a, b) = key(e.a, e.b);
                Edge { a, b, age: e.age }
            })
            .collect();
        edges.sort();
        edges.dedup_by(|x, y| x.a == y.a && x.b == y.b);
        if edges.iter().any(|e| e.b >= neurons.len() || e.a == e.b) {
            return Err(Error::Invalid("edge endpoints must be distinct existing neurons".into()));
        }
        if let Some(p) = previous_bmu {
            let n = neurons.get(p).ok_or_else(|| Error::Invalid(format!("no neuron {p}")))?;
            net.previous_bmu = Some((n.weight.clone(), n.contexts.clone()));
        }
        net.neurons = neurons;
        net.edges = edges;
        net.global_contexts = global_contexts;
        Ok(net)
    }

    fn seed(&mut self, a: &[f64], b: &[f64]) {
        let zero = vec![vec![0.0; self.dim]; self.params.contexts()];
        self.neurons.push(GwrNeuron::new(a.to_vec(), zero.clone(), self.step));
        self.neurons.push(GwrNeuron::new(b.to_vec(), zero, self.step));
        self.edges.push(Edge { a: 0, b: 1, age: 0 });
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> &GwrParams {
        &self.params
    }

    pub fn neurons(&self) -> &[GwrNeuron] {
        &self.neurons
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.neurons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neurons.is_empty()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn global_contexts(&self) -> &[Vec<f64>] {
        &self.global_contexts
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Shape(format!("GWR expects {}-dimensional input, got {}", self.dim, x.len())));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("GWR input has non-finite values".into()));
        }
        Ok(())
    }

    /// Context-weighted distance of neuron `j` to `x` under the current
    /// global contexts.
    pub fn distance(&self, j: usize, x: &[f64]) -> f64 {
        let n = &self.neurons[j];
        let mut d = self.params.alpha[0] * sq_dist(x, &n.weight);
        for (k, ctx) in self.global_contexts.iter().enumerate() {
            d += self.params.alpha[k + 1] * sq_dist(ctx, &n.contexts[k]);
        }
        d
    }

    /// Winner and runner-up under the current global contexts. Ties go to
    /// the lower index.
    pub fn find_bmu(&self, x: &[f64]) -> Result<Bmu> {
        self.check_dim(x)?;
        if self.neurons.is_empty() {
            return Err(Error::Invalid("find_bmu on an empty network".into()));
        }
        let (mut b, mut db) = (0, f64::INFINITY);
        let (mut s, mut ds) = (0, f64::INFINITY);
        for j in 0..self.neurons.len() {
            let d = self.distance(j, x);
            if d < db {
                (s, ds) = (b, db);
                (b, db) = (j, d);
            } else if d < ds {
                (s, ds) = (j, d);
            }
        }
        if self.neurons.len() == 1 {
            s = b;
        }
        Ok(Bmu { index: b, distance: db, second: s })
    }

    /// Advances the global contexts from the previous winner:
    /// `C_k = beta * w_prev + (1 - beta) * c_{k-1, prev}` with `c_0 = w`.
    pub fn update_global_context(&mut self) -> &[Vec<f64>] {
        if let Some((w, c)) = &self.previous_bmu {
            let beta = self.params.beta;
            for k in 0..self.global_contexts.len() {
                let prev = if k == 0 { w } else { &c[k - 1] };
                for i in 0..self.dim {
                    self.global_contexts[k][i] = beta * w[i] + (1.0 - beta) * prev[i];
                }
            }
        }
        &self.global_contexts
    }

    fn neighbors(&self, j: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter_map(|e| {
                if e.a == j {
                    Some(e.b)
                } else if e.b == j {
                    Some(e.a)
                } else {
                    None
                }
            })
            .collect()
    }

    fn connect(&mut self, a: usize, b: usize) {
        let (a, b) = key(a, b);
        match self.edges.iter_mut().find(|e| e.a == a && e.b == b) {
            Some(e) => e.age = 0,
            None => {
                self.edges.push(Edge { a, b, age: 0 });
                self.edges.sort();
            }
        }
    }

    fn disconnect(&mut self, a: usize, b: usize) {
        let (a, b) = key(a, b);
        self.edges.retain(|e| !(e.a == a && e.b == b));
    }

    fn adapt(&mut self, j: usize, x: &[f64], rate: f64) {
        let n = &mut self.neurons[j];
        for (w, xi) in n.weight.iter_mut().zip(x) {
            *w += rate * (xi - *w);
        }
        for (c, g) in n.contexts.iter_mut().zip(&self.global_contexts) {
            for (ci, gi) in c.iter_mut().zip(g) {
                *ci += rate * (gi - *ci);
            }
        }
    }

    /// One online learning step.
    pub fn step(&mut self, x: &[f64], annotation: Option<&AnnotationSample>) -> Result<StepOutcome> {
        self.check_dim(x)?;
        if self.neurons.is_empty() {
            self.seed(x, x);
            if let Some(a) = annotation {
                self.neurons[0].annotation.add(a);
            }
            self.neurons[0].last_bmu_step = Some(self.step);
            self.previous_bmu = Some((x.to_vec(), self.neurons[0].contexts.clone()));
            self.step += 1;
            return Ok(StepOutcome {
                bmu: 0,
                second: 1,
                distance: 0.0,
                activity: 1.0,
                bmu_habituation: 1.0,
                event: StepEvent::Seeded,
                removed_edges: 0,
                removed_neurons: 0,
            });
        }

        self.update_global_context();
        let Bmu { index: b, distance, second: s } = self.find_bmu(x)?;

        for e in self.edges.iter_mut() {
            if e.a == b || e.b == b {
                e.age = e.age.saturating_add(1);
            }
        }
        if s != b {
            self.connect(b, s);
        }

        let activity = (-distance).exp();
        let h_b = self.neurons[b].habituation;
        let p = self.params.clone();
        let event = if activity < p.a_t && h_b < p.h_t {
            let nb = &self.neurons[b];
            let weight: Vec<f64> = nb.weight.iter().zip(x).map(|(w, xi)| 0.5 * (w + xi)).collect();
            let contexts: Vec<Vec<f64>> = nb
                .contexts
                .iter()
                .zip(&self.global_contexts)
                .map(|(c, g)| c.iter().zip(g).map(|(ci, gi)| 0.5 * (ci + gi)).collect())
                .collect();
            let r = self.neurons.len();
            self.neurons.push(GwrNeuron::new(weight, contexts, self.step));
            self.connect(r, b);
            if s != b {
                self.connect(r, s);
                self.disconnect(b, s);
            }
            StepEvent::Inserted(r)
        } else {
            self.adapt(b, x, p.eps_b * h_b);
            for n in self.neighbors(b) {
                let h_n = self.neurons[n].habituation;
                self.adapt(n, x, p.eps_n * h_n);
            }
            StepEvent::Adapted
        };

        self.neurons[b].habituation = habituate(h_b, p.tau_b, p.kappa, p.h_floor);
        for n in self.neighbors(b) {
            if matches!(event, StepEvent::Inserted(r) if r == n) {
                continue;
            }
            let h = self.neurons[n].habituation;
            self.neurons[n].habituation = habituate(h, p.tau_n, p.kappa, p.h_floor);
        }

        if let Some(a) = annotation {
            self.neurons[b].annotation.add(a);
        }
        self.neurons[b].last_bmu_step = Some(self.step);
        self.previous_bmu = Some((self.neurons[b].weight.clone(), self.neurons[b].contexts.clone()));

        let before = self.edges.len();
        self.edges.retain(|e| e.age <= p.max_edge_age);
        let removed_edges = before - self.edges.len();
        let remap = self.remove_isolated();
        let removed_neurons = remap.iter().filter(|m| m.is_none()).count();
        let map = |i: usize| remap[i].expect("winner and partners keep their edges");
        let event = match event {
            StepEvent::Inserted(r) => StepEvent::Inserted(map(r)),
            e => e,
        };
        self.step += 1;
        Ok(StepOutcome {
            bmu: map(b),
            second: map(s),
            distance,
            activity,
            bmu_habituation: h_b,
            event,
            removed_edges,
            removed_neurons,
        })
    }

    /// Drops neurons without edges; returns old-index -> new-index.
    fn remove_isolated(&mut self) -> Vec<Option<usize>> {
        let mut linked = vec![false; self.neurons.len()];
        for e in &self.edges {
            linked[e.a] = true;
            linked[e.b] = true;
        }
        let mut remap = vec![None; self.neurons.len()];
        let mut next = 0;
        for (i, l) in linked.iter().enumerate() {
            if *l {
                remap[i] = Some(next);
                next += 1;
            }
        }
        if next == self.neurons.len() {
            return remap;
        }
        let old = std::mem::take(&mut self.neurons);
        self.neurons = old.into_iter().zip(&linked).filter(|(_, l)| **l).map(|(n, _)| n).collect();
        for e in self.edges.iter_mut() {
            let (a, b) = (remap[e.a].unwrap(), remap[e.b].unwrap());
            (e.a, e.b) = key(a, b);
        }
        self.edges.sort();
        remap
    }

    /// Checks the graph invariants: edge endpoints exist, no self edges, no
    /// duplicate edges, no isolated neurons, habituation in (0, 1].
    pub fn check_well_formed(&self) -> Result<()> {
        let n = self.neurons.len();
        let mut linked = vec![false; n];
        for (i, e) in self.edges.iter().enumerate() {
            if e.a >= n || e.b >= n {
                return Err(Error::Invalid(format!("edge {}-{} has a missing endpoint", e.a, e.b)));
            }
            if e.a >= e.b {
                return Err(Error::Invalid(format!("edge {}-{} is a self edge or unordered", e.a, e.b)));
            }
            if self.edges[..i].iter().any(|o| o.a == e.a && o.b == e.b) {
                return Err(Error::Invalid(format!("duplicate edge {}-{}", e.a, e.b)));
            }
            linked[e.a] = true;
            linked[e.b] = true;
        }
        if let Some(i) = linked.iter().position(|l| !l) {
            return Err(Error::Invalid(format!("neuron {i} is isolated")));
        }
        for (i, nr) in self.neurons.iter().enumerate() {
            if !(nr.habituation > 0.0 && nr.habituation <= 1.0) {
                return Err(Error::Invalid(format!("neuron {i} habituation {} outside (0, 1]", nr.habituation)));
            }
            if nr.weight.len() != self.dim || nr.contexts.iter().any(|c| c.len() != self.dim) {
                return Err(Error::Invalid(format!("neuron {i} has the wrong dimensionality")));
            }
        }
        Ok(())
    }

    /// Mean valence over neurons that have won at least one annotated sample.
    pub fn mean_valence(&self) -> Option<f64> {
        mean(self.neurons.iter().filter_map(|n| n.annotation.mean_valence()))
    }

    pub fn mean_arousal(&self) -> Option<f64> {
        mean(self.neurons.iter().filter_map(|n| n.annotation.mean_arousal()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

fn mean(it: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Per-epoch summary of [`train`].
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct TrainReport {
    pub neuron_counts: Vec<usize>,
    /// Mean Euclidean distance between each sample and its winner's weight.
    pub quantization_errors: Vec<f64>,
}

/// Builds a network from the first two distinct samples (or two copies of
/// the first, if all are equal) and runs seeded, shuffled epochs of `step`.
pub fn train(
    data: &[Vec<f64>],
    annotations: Option<&[AnnotationSample]>,
    params: GwrParams,
    epochs: usize,
    seed: u64,
) -> Result<(GwrNetwork, TrainReport)> {
    let first = data.first().ok_or_else(|| Error::Invalid("GWR training set is empty".into()))?;
    if let Some(a) = annotations {
        if a.len() != data.len() {
            return Err(Error::Shape(format!("{} annotations for {} samples", a.len(), data.len())));
        }
    }
    let second = data.iter().find(|x| *x != first).unwrap_or(first);
    let mut net = GwrNetwork::with_initial(first, second, params)?;
    let mut rng = seeded_rng(seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut report = TrainReport::default();
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        let mut qe = 0.0;
        for &i in &order {
            let ann = annotations.map(|a| &a[i]);
            let out = net.step(&data[i], ann)?;
            qe += sq_dist(&data[i], &net.neurons[out.bmu].weight).sqrt();
        }
        report.neuron_counts.push(net.len());
        report.quantization_errors.push(qe / data.len() as f64);
    }
    Ok((net, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn habituation_formula() {
        assert!((habituate(1.0, 0.3, 1.05, 1e-6) - 0.7).abs() < 1e-15);
        assert_eq!(habituate(0.42, 0.0, 1.05, 1e-6), 0.42);
    }

    #[test]
    fn seeding_creates_two_linked_neurons() {
        let mut net = GwrNetwork::new(2, GwrParams::default()).unwrap();
        let out = net.step(&[0.1, 0.2], None).unwrap();
        assert_eq!(out.event, StepEvent::Seeded);
        assert_eq!(net.len(), 2);
        net.check_well_formed().unwrap();
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let net = GwrNetwork::with_initial(&[0.0], &[1.0], GwrParams::default()).unwrap();
        assert!(net.find_bmu(&[0.0, 1.0]).is_err());
    }
}

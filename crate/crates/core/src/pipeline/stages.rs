//! Training stages, replay and reporting over decoded sessions.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

use super::data::{represent, represent_all, LoadedEvent};
use super::settings::Settings;
use crate::affect::{Annotation, Concept};
use crate::appraisal::{
    memory_update, mood_update, perceive, AppraisalHeads, MemoryRegistry, MoodState, PerceptionMode, TrajectoryPoint,
    trajectory_csv, TRAJECTORY_CSV_HEADER,
};
use crate::cccnn::{split_indices, Cccnn, ModelSpec, TrainParams};
use crate::error::{Error, Result};
use crate::eval::{accuracy, ccc, Report, ReportRow};
use crate::gwr::{self, AnnotationSample};
use crate::session::ModelState;

/// Summary of one training stage.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StageReport {
    pub stage: String,
    pub train_events: usize,
    pub losses: Vec<f64>,
    pub val_accuracy: Vec<f64>,
    /// Held-out accuracy (classification stages and the concept head).
    pub test_accuracy: Option<f64>,
    /// Held-out arousal and valence CCC (regression stages).
    pub test_ccc: Option<(f64, f64)>,
    pub neuron_count: Option<usize>,
}

pub fn fresh_state(s: &Settings) -> Result<ModelState> {
    let mut mood = MoodState::with_params(s.mood_strength, s.mood.clone())?;
    mood.exponent_scale = s.exponent_scale;
    mood.inject_memory = s.inject_memory;
    let mut st = ModelState::new(mood);
    st.memories = MemoryRegistry::new(s.memory.clone());
    st.hyperparameters = s.effective();
    Ok(st)
}

/// Train/validation/test indices of the corpus. The first stage fixes the
/// split seed in the state so later stages see the same partition.
pub fn corpus_split(state: &mut ModelState, n: usize, seed: u64) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let split_seed = *state.seeds.entry("split".into()).or_insert(seed);
    split_indices(n, split_seed)
}

fn labeled<'a>(data: &'a [LoadedEvent], idx: &[usize], need: impl Fn(&LoadedEvent) -> bool) -> Vec<&'a LoadedEvent> {
    idx.iter().map(|&i| &data[i]).filter(|e| e.annotation().is_some() && need(e)).collect()
}

fn one_hot(e: &LoadedEvent) -> [f64; 7] {
    e.annotation().expect("filtered to labeled events").concept.one_hot()
}

fn model_mut<'a>(state: &'a mut ModelState, s: &Settings, seed: u64) -> Result<&'a mut Cccnn> {
    if state.model.is_none() {
        let mut m = Cccnn::new(ModelSpec::by_name(&s.profile)?, seed)?;
        m.set_gammas(s.gamma_visual, s.gamma_auditory)?;
        state.model = Some(m);
        state.seeds.insert("init".into(), seed);
    }
    Ok(state.model.as_mut().expect("set above"))
}

fn seeded(hp: &TrainParams, seed: u64) -> TrainParams {
    TrainParams { seed, ..hp.clone() }
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..p.len() {
        if p[i] > p[best] {
            best = i;
        }
    }
    best
}

fn class_accuracy(probs: &[[f64; 7]], events: &[&LoadedEvent]) -> Result<f64> {
    let pred: Vec<Concept> = probs.iter().map(|p| Concept::from_index(argmax(p)).expect("7 classes")).collect();
    let truth: Vec<Concept> = events.iter().map(|e| e.annotation().expect("labeled").concept).collect();
    accuracy(&pred, &truth)
}

pub fn train_visual(state: &mut ModelState, data: &[LoadedEvent], s: &Settings, seed: u64) -> Result<StageReport> {
    let (tr, va, te) = corpus_split(state, data.len(), seed);
    let has = |e: &LoadedEvent| e.visual.is_some();
    let (tr, va, te) = (labeled(data, &tr, has), labeled(data, &va, has), labeled(data, &te, has));
    if tr.is_empty() {
        return Err(Error::Validation("no labeled visual events in the training split".into()));
    }
    let clips = |v: &[&LoadedEvent]| v.iter().map(|e| e.visual.clone().expect("filtered")).collect::<Vec<_>>();
    let labels = |v: &[&LoadedEvent]| v.iter().map(|e| one_hot(e)).collect::<Vec<_>>();
    let (vc, vl) = (clips(&va), labels(&va));
    let model = model_mut(state, s, seed)?;
    let rep = model.train_unimodal_visual(
        &clips(&tr),
        &labels(&tr),
        (!va.is_empty()).then_some((&vc[..], &vl[..])),
        &seeded(&s.train_visual, seed),
    )?;
    let test_accuracy = if te.is_empty() {
        None
    } else {
        let tc = clips(&te);
        Some(class_accuracy(&model.classify_visual(&tc.iter().collect::<Vec<_>>())?, &te)?)
    };
    state.seeds.insert("train_visual".into(), seed);
    Ok(StageReport {
        stage: "train-visual".into(),
        train_events: tr.len(),
        losses: rep.losses,
        val_accuracy: rep.val_accuracy,
        test_accuracy,
        ..Default::default()
    })
}

pub fn train_audio(state: &mut ModelState, data: &[LoadedEvent], s: &Settings, seed: u64) -> Result<StageReport> {
    let (tr, va, te) = corpus_split(state, data.len(), seed);
    let has = |e: &LoadedEvent| e.mfcc.is_some();
    let (tr, va, te) = (labeled(data, &tr, has), labeled(data, &va, has), labeled(data, &te, has));
    if tr.is_empty() {
        return Err(Error::Validation("no labeled audio events in the training split".into()));
    }
    let maps = |v: &[&LoadedEvent]| v.iter().map(|e| e.mfcc.clone().expect("filtered")).collect::<Vec<_>>();
    let labels = |v: &[&LoadedEvent]| v.iter().map(|e| one_hot(e)).collect::<Vec<_>>();
    let (vm, vl) = (maps(&va), labels(&va));
    let model = model_mut(state, s, seed)?;
    let rep = model.train_unimodal_auditory(
        &maps(&tr),
        &labels(&tr),
        (!va.is_empty()).then_some((&vm[..], &vl[..])),
        &seeded(&s.train_audio, seed),
    )?;
    let test_accuracy = if te.is_empty() {
        None
    } else {
        let tm = maps(&te);
        Some(class_accuracy(&model.classify_auditory(&tm.iter().collect::<Vec<_>>())?, &te)?)
    };
    state.seeds.insert("train_audio".into(), seed);
    Ok(StageReport {
        stage: "train-audio".into(),
        train_events: tr.len(),
        losses: rep.losses,
        val_accuracy: rep.val_accuracy,
        test_accuracy,
        ..Default::default()
    })
}

fn ccc_pair(pred: &[(f64, f64)], truth: &[&Annotation]) -> Result<(f64, f64)> {
    let pa: Vec<f64> = pred.iter().map(|p| p.0).collect();
    let pv: Vec<f64> = pred.iter().map(|p| p.1).collect();
    let ta: Vec<f64> = truth.iter().map(|a| a.arousal).collect();
    let tv: Vec<f64> = truth.iter().map(|a| a.valence).collect();
    Ok((ccc(&pa, &ta)?, ccc(&pv, &tv)?))
}

pub fn train_cross(state: &mut ModelState, data: &[LoadedEvent], s: &Settings, seed: u64) -> Result<StageReport> {
    let (tr, _, te) = corpus_split(state, data.len(), seed);
    let has = |e: &LoadedEvent| e.visual.is_some() && e.mfcc.is_some();
    let (tr, te) = (labeled(data, &tr, has), labeled(data, &te, has));
    if tr.is_empty() {
        return Err(Error::Validation("no labeled audio-visual events in the training split".into()));
    }
    let model = state
        .model
        .as_mut()
        .ok_or_else(|| Error::Invalid("train-cross needs a state with trained channels".into()))?;
    let clips: Vec<_> = tr.iter().map(|e| e.visual.clone().expect("filtered")).collect();
    let maps: Vec<_> = tr.iter().map(|e| e.mfcc.clone().expect("filtered")).collect();
    let targets: Vec<(f64, f64)> = tr.iter().map(|e| e.annotation().map(|a| (a.arousal, a.valence)).expect("labeled")).collect();
    let rep = model.train_crossmodal_finetune(&clips, &maps, &targets, &seeded(&s.train_cross, seed))?;
    let test_ccc = if te.len() >= 2 {
        let mut pred = Vec::new();
        for e in &te {
            pred.extend(model.predict_regression(&e.batch()?)?);
        }
        Some(ccc_pair(&pred, &te.iter().map(|e| e.annotation().expect("labeled")).collect::<Vec<_>>())?)
    } else {
        None
    };
    state.seeds.insert("train_cross".into(), seed);
    Ok(StageReport {
        stage: "train-cross".into(),
        train_events: tr.len(),
        losses: rep.losses,
        test_ccc,
        ..Default::default()
    })
}

fn sample_of(a: &Annotation) -> AnnotationSample {
    AnnotationSample { arousal: a.arousal, valence: a.valence, concepts: a.concept.one_hot() }
}

/// Held-out concept accuracy and AV CCC of the heads applied to frozen
/// perception winners.
pub fn evaluate_heads(state: &ModelState, events: &[&LoadedEvent]) -> Result<(f64, Option<(f64, f64)>)> {
    let (Some(model), Some(perception), Some(heads)) = (&state.model, &state.perception, &state.heads) else {
        return Err(Error::Invalid("evaluation needs a model, a perception network and trained heads".into()));
    };
    let mut net = perception.clone();
    let mut probs = Vec::new();
    let mut av = Vec::new();
    for e in events {
        let p = perceive(&mut net, heads, &represent(model, e)?, PerceptionMode::Frozen)?;
        probs.push(p.concepts);
        av.push((p.arousal, p.valence));
    }
    let acc = class_accuracy(&probs, events)?;
    let c = if events.len() >= 2 {
        Some(ccc_pair(&av, &events.iter().map(|e| e.annotation().expect("labeled")).collect::<Vec<_>>())?)
    } else {
        None
    };
    Ok((acc, c))
}

/// Grows the perception network on training representations and fits the
/// heads on (winner prototype, annotation) pairs.
pub fn fit_perception(state: &mut ModelState, data: &[LoadedEvent], s: &Settings, seed: u64) -> Result<StageReport> {
    let (tr, _, te) = corpus_split(state, data.len(), seed);
    let any = |e: &LoadedEvent| e.visual.is_some() || e.mfcc.is_some();
    let (tr, te) = (labeled(data, &tr, any), labeled(data, &te, any));
    if tr.is_empty() {
        return Err(Error::Validation("no labeled events in the training split".into()));
    }
    let model = state.model.as_ref().ok_or_else(|| Error::Invalid("fit-perception needs a trained model".into()))?;
    let feats = represent_all(model, &tr)?;
    let anns: Vec<Annotation> = tr.iter().map(|e| *e.annotation().expect("labeled")).collect();
    let samples: Vec<AnnotationSample> = anns.iter().map(sample_of).collect();
    let (net, _) = gwr::train(&feats, Some(&samples), s.perception.clone(), s.perception_epochs, seed)?;
    let protos: Vec<Vec<f64>> = feats
        .iter()
        .map(|x| net.find_bmu(x).map(|b| net.neurons()[b.index].weight.clone()))
        .collect::<Result<_>>()?;
    let mut heads = AppraisalHeads::new(net.dim(), s.heads.hidden, seed)?;
    let losses = heads.train(&protos, &anns, &s.heads, seed)?;
    let neuron_count = Some(net.len());
    state.perception = Some(net);
    state.heads = Some(heads);
    state.seeds.insert("fit_perception".into(), seed);
    let (test_accuracy, test_ccc) = if te.is_empty() {
        (None, None)
    } else {
        let (a, c) = evaluate_heads(state, &te)?;
        (Some(a), c)
    };
    Ok(StageReport {
        stage: "fit-perception".into(),
        train_events: tr.len(),
        losses,
        test_accuracy,
        test_ccc,
        neuron_count,
        ..Default::default()
    })
}

/// One replayed event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerceptRecord {
    pub t_ms: u64,
    pub subject: String,
    pub topic: String,
    pub arousal: f64,
    pub valence: f64,
    pub concept: Concept,
    pub reps: u32,
    pub memory_valence: f64,
}

pub const PERCEPTS_CSV_HEADER: &str = "t_ms,subject,topic,arousal,valence,concept,reps,memory_valence";
pub const PERCEPTS_FILE: &str = "percepts.csv";
pub const TRAJECTORY_DIR: &str = "trajectories";

fn csv_error(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

fn read_csv<T: serde::de::DeserializeOwned>(path: &Path, header: &str) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let found = r.headers().map_err(csv_error)?.iter().collect::<Vec<_>>().join(",");
    if found != header {
        return Err(Error::Validation(format!("{}: header '{found}', expected '{header}'", path.display())));
    }
    r.deserialize()
        .map(|row| row.map_err(|e| Error::Validation(format!("{}: {e}", path.display()))))
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplayOutput {
    pub percepts: Vec<PerceptRecord>,
    pub memory: BTreeMap<String, Vec<TrajectoryPoint>>,
    pub mood: Vec<TrajectoryPoint>,
}

impl ReplayOutput {
    pub fn percepts_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for p in &self.percepts {
            w.serialize(p).map_err(csv_error)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
    }

    /// Writes `percepts.csv`, `trajectories/memory_<subject>.csv` and
    /// `trajectories/mood.csv` under `dir`; returns the relative paths.
    pub fn write_dir(&self, dir: &Path) -> Result<Vec<String>> {
        let traj = dir.join(TRAJECTORY_DIR);
        std::fs::create_dir_all(&traj).map_err(|e| Error::io(&traj, e))?;
        let mut files = vec![(PERCEPTS_FILE.to_string(), self.percepts_csv()?)];
        for (subject, points) in &self.memory {
            files.push((format!("{TRAJECTORY_DIR}/memory_{subject}.csv"), trajectory_csv(points)));
        }
        files.push((format!("{TRAJECTORY_DIR}/mood.csv"), trajectory_csv(&self.mood)));
        for (name, text) in &files {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
        Ok(files.into_iter().map(|(n, _)| n).collect())
    }

    /// Reads back what [`ReplayOutput::write_dir`] wrote.
    pub fn read_dir(dir: &Path) -> Result<Self> {
        let percepts = read_csv(&dir.join(PERCEPTS_FILE), PERCEPTS_CSV_HEADER)?;
        let traj = dir.join(TRAJECTORY_DIR);
        let mut memory = BTreeMap::new();
        let entries = std::fs::read_dir(&traj).map_err(|e| Error::io(&traj, e))?;
        for entry in entries {
            let path = entry.map_err(|e| Error::io(&traj, e))?.path();
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            if let Some(subject) = name.strip_prefix("memory_").and_then(|n| n.strip_suffix(".csv")) {
                memory.insert(subject.to_string(), read_csv(&path, TRAJECTORY_CSV_HEADER)?);
            }
        }
        let mood = read_csv(&traj.join("mood.csv"), TRAJECTORY_CSV_HEADER)?;
        Ok(Self { percepts, memory, mood })
    }

    pub fn total_mood_updates(&self) -> u64 {
        self.percepts.iter().map(|p| p.reps as u64).sum()
    }
}

fn mood_point(t_ms: u64, mood: &MoodState) -> TrajectoryPoint {
    let (arousal, valence) = mood.mean_av();
    TrajectoryPoint { t_ms, arousal, valence, neuron_count: mood.network.len() }
}

/// Feeds the session through perception, the subjects' memories and the
/// mood, strictly in order.
pub fn replay(state: &mut ModelState, data: &[LoadedEvent], s: &Settings) -> Result<ReplayOutput> {
    if s.snapshot_every == 0 {
        return Err(Error::Invalid("replay.snapshot_every must be positive".into()));
    }
    let model = state.model.as_ref().ok_or_else(|| Error::Invalid("replay needs a trained model".into()))?;
    let heads = state.heads.as_ref().ok_or_else(|| Error::Invalid("replay needs trained heads".into()))?;
    let perception =
        state.perception.as_mut().ok_or_else(|| Error::Invalid("replay needs a perception network".into()))?;
    let mut out = ReplayOutput::default();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for (i, e) in data.iter().enumerate() {
        let x = represent(model, e)?;
        let percept = perceive(perception, heads, &x, s.perception_mode)?;
        let subject = e.event.subject.clone();
        let memory = memory_update(&mut state.memories, &subject, &percept)?.clone();
        let reps = mood_update(&mut state.mood, &percept, Some(&memory))?;
        out.percepts.push(PerceptRecord {
            t_ms: e.event.t_ms,
            subject: subject.clone(),
            topic: e.event.topic.clone().unwrap_or_default(),
            arousal: percept.arousal,
            valence: percept.valence,
            concept: percept.concept(),
            reps,
            memory_valence: crate::appraisal::mean_memory_valence(&memory),
        });
        let n = seen.entry(subject.clone()).or_insert(0);
        *n += 1;
        if *n % s.snapshot_every == 0 {
            out.memory.entry(subject).or_default().push(TrajectoryPoint::of(e.event.t_ms, &memory.network));
        }
        if (i + 1) % s.snapshot_every == 0 {
            out.mood.push(mood_point(e.event.t_ms, &state.mood));
        }
    }
    Ok(out)
}

/// Mean of the event values with `t_ms <= t`, for each `t` in `times`.
fn expanding_mean(events: &[(u64, f64)], times: &[u64]) -> Vec<Option<f64>> {
    times
        .iter()
        .map(|&t| {
            let (s, n) = events.iter().filter(|(te, _)| *te <= t).fold((0.0, 0usize), |(s, n), (_, v)| (s + v, n + 1));
            (n > 0).then(|| s / n as f64)
        })
        .collect()
}

/// Concordance of a trajectory with the expanding mean of ground-truth
/// arousal and valence over `events`.
pub fn trajectory_ccc(points: &[TrajectoryPoint], events: &[&Annotation], times: &[u64]) -> Result<(f64, f64)> {
    let pairs_a: Vec<(u64, f64)> = times.iter().zip(events).map(|(t, a)| (*t, a.arousal)).collect();
    let pairs_v: Vec<(u64, f64)> = times.iter().zip(events).map(|(t, a)| (*t, a.valence)).collect();
    let ts: Vec<u64> = points.iter().map(|p| p.t_ms).collect();
    let ga = expanding_mean(&pairs_a, &ts);
    let gv = expanding_mean(&pairs_v, &ts);
    let mut xa = Vec::new();
    let mut ya = Vec::new();
    let mut xv = Vec::new();
    let mut yv = Vec::new();
    for (p, (a, v)) in points.iter().zip(ga.iter().zip(&gv)) {
        if let (Some(a), Some(v)) = (a, v) {
            xa.push(p.arousal);
            ya.push(*a);
            xv.push(p.valence);
            yv.push(*v);
        }
    }
    Ok((ccc(&xa, &ya)?, ccc(&xv, &yv)?))
}

fn percept_row(kind: &str, group: &str, rows: &[(&PerceptRecord, &Annotation)]) -> Result<ReportRow> {
    let n = rows.len();
    let (mut ca, mut cv) = (None, None);
    if n >= 2 {
        let pa: Vec<f64> = rows.iter().map(|(p, _)| p.arousal).collect();
        let ta: Vec<f64> = rows.iter().map(|(_, a)| a.arousal).collect();
        let pv: Vec<f64> = rows.iter().map(|(p, _)| p.valence).collect();
        let tv: Vec<f64> = rows.iter().map(|(_, a)| a.valence).collect();
        ca = Some(ccc(&pa, &ta)?);
        cv = Some(ccc(&pv, &tv)?);
    }
    let pred: Vec<Concept> = rows.iter().map(|(p, _)| p.concept).collect();
    let truth: Vec<Concept> = rows.iter().map(|(_, a)| a.concept).collect();
    Ok(ReportRow {
        group_kind: kind.into(),
        group: group.into(),
        events: n,
        ccc_arousal: ca,
        ccc_valence: cv,
        accuracy: (n > 0).then(|| accuracy(&pred, &truth)).transpose()?,
    })
}

/// Per-subject, per-topic and overall tables, plus memory and mood
/// trajectory concordance with the ground-truth running means.
pub fn build_report(title: &str, events: &[crate::session::SessionEvent], replay: &ReplayOutput) -> Result<Report> {
    if events.len() != replay.percepts.len() {
        return Err(Error::Validation(format!(
            "session has {} events but the replay recorded {}",
            events.len(),
            replay.percepts.len()
        )));
    }
    let paired: Vec<(&PerceptRecord, &Annotation)> = replay
        .percepts
        .iter()
        .zip(events)
        .filter_map(|(p, e)| e.annotation.as_ref().map(|a| (p, a)))
        .collect();
    let mut rows = Vec::new();
    let mut by_subject: BTreeMap<&str, Vec<(&PerceptRecord, &Annotation)>> = BTreeMap::new();
    let mut by_topic: BTreeMap<&str, Vec<(&PerceptRecord, &Annotation)>> = BTreeMap::new();
    for &(p, a) in &paired {
        by_subject.entry(&p.subject).or_default().push((p, a));
        by_topic.entry(&p.topic).or_default().push((p, a));
    }
    for (g, r) in &by_subject {
        rows.push(percept_row("subject", g, r)?);
    }
    for (g, r) in &by_topic {
        rows.push(percept_row("topic", g, r)?);
    }
    rows.push(percept_row("all", "all", &paired)?);
    for (subject, points) in &replay.memory {
        let evs: Vec<(&Annotation, u64)> = events
            .iter()
            .filter(|e| &e.subject == subject)
            .filter_map(|e| e.annotation.as_ref().map(|a| (a, e.t_ms)))
            .collect();
        let anns: Vec<&Annotation> = evs.iter().map(|x| x.0).collect();
        let times: Vec<u64> = evs.iter().map(|x| x.1).collect();
        let mut row = ReportRow { group_kind: "memory".into(), group: subject.clone(), events: points.len(), ..Default::default() };
        if points.len() >= 2 {
            let (a, v) = trajectory_ccc(points, &anns, &times)?;
            row.ccc_arousal = Some(a);
            row.ccc_valence = Some(v);
        }
        rows.push(row);
    }
    let anns: Vec<&Annotation> = paired.iter().map(|x| x.1).collect();
    let times: Vec<u64> = paired.iter().map(|x| x.0.t_ms).collect();
    let mut row = ReportRow { group_kind: "mood".into(), group: "session".into(), events: replay.mood.len(), ..Default::default() };
    if replay.mood.len() >= 2 {
        let (a, v) = trajectory_ccc(&replay.mood, &anns, &times)?;
        row.ccc_arousal = Some(a);
        row.ccc_valence = Some(v);
    }
    rows.push(row);
    Ok(Report { title: title.into(), rows })
}

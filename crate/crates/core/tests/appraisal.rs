use emocircuit::affect::{valence_to_unit, Concept};
use emocircuit::appraisal::{
    mean_memory_valence, memory_params, memory_trajectory, memory_update, mood_modulator, mood_update, perceive,
    AffectiveMemory, MemoryRegistry, MoodState, Percept, PerceptionMode,
};
use emocircuit::gwr::{AnnotationSample, GwrNetwork};
use emocircuit::pipeline::represent;
use proptest::prelude::*;
use rand::Rng;

mod common;
use common::pipeline::{quick_pipeline, settings, QUICK};

fn percept(proto: Vec<f64>, arousal: f64, valence: f64, concept: Concept) -> Percept {
    Percept { bmu_index: 0, bmu_prototype: proto, arousal, valence, concepts: concept.one_hot() }
}

/// Point near `center` in every coordinate.
fn near(rng: &mut impl Rng, center: f64, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| center + rng.gen_range(-0.05..0.05)).collect()
}

#[test]
fn modulator_table() {
    let e1 = std::f64::consts::E;
    for v_m in [-3.0, 0.0, 0.4, 1.0, 7.0] {
        assert_eq!(mood_modulator(0.5, v_m, 1.0).unwrap(), (1.0, 1));
    }
    assert_eq!(mood_modulator(0.8, 0.0, 1.0).unwrap(), (2.0, 2));
    assert_eq!(mood_modulator(0.2, 0.0, 1.0).unwrap(), (0.0, 0));
    let (m, reps) = mood_modulator(0.8, 1.0, 1.0).unwrap();
    assert!((m - (1.0 + e1)).abs() < 1e-12);
    assert_eq!(reps, 4);
    assert_eq!(mood_modulator(0.5, 0.3, 2.6).unwrap().1, 3);
    assert!(mood_modulator(0.8, 0.0, 0.0).is_err());
}

#[test]
fn modulator_sweep() {
    let mut rng = common::rng(4);
    for _ in 0..10_000 {
        let v_p = if rng.gen_bool(0.05) { 0.5 } else { rng.gen_range(0.0..=1.0) };
        let v_m = rng.gen_range(-1.0..=1.0);
        let e = rng.gen_range(0.01..5.0);
        let (m, reps) = mood_modulator(v_p, v_m, e).unwrap();
        let expected = if v_p > 0.5 { e * (1.0 + v_m.exp()) } else if v_p == 0.5 { e } else { e * (1.0 - v_m.exp()) };
        assert_eq!(m, expected);
        assert_eq!(reps as f64, expected.round().max(0.0));
        // continuity within a branch
        let (m2, _) = mood_modulator(v_p, v_m + 1e-9, e).unwrap();
        assert!((m2 - m).abs() < 1e-7 * e);
    }
}

#[test]
fn more_positive_memory_never_lowers_positive_reps() {
    let mut last = 0;
    for i in 0..=100 {
        let (_, reps) = mood_modulator(0.9, i as f64 / 100.0, 1.0).unwrap();
        assert!(reps >= last);
        last = reps;
    }
}

fn memory_with(valences: &[f64]) -> AffectiveMemory {
    let mut reg = MemoryRegistry::default();
    for (i, v) in valences.iter().enumerate() {
        // far apart prototypes: every sample gets its own neuron
        memory_update(&mut reg, "s", &percept(vec![10.0 * i as f64, 0.0], 0.5, *v, Concept::Neutral)).unwrap();
    }
    reg.memories.remove("s").unwrap()
}

#[test]
fn mean_memory_valence_examples() {
    let all_half = memory_with(&[0.5, 0.5, 0.5]);
    assert!((mean_memory_valence(&all_half) - 0.5).abs() < 1e-12);
    let sym = memory_with(&[-1.0, 1.0]);
    assert!(mean_memory_valence(&sym).abs() < 1e-12);
    let empty = AffectiveMemory { subject: "x".into(), network: GwrNetwork::new(2, memory_params()).unwrap() };
    assert_eq!(mean_memory_valence(&empty), 0.0);
}

#[test]
fn mean_memory_valence_matches_a_naive_mean() {
    let mut rng = common::rng(8);
    let mut reg = MemoryRegistry::default();
    for _ in 0..300 {
        let center = rng.gen_range(-20.0..20.0);
        let proto = near(&mut rng, center, 3);
        let p = percept(proto, rng.gen_range(0.0..1.0), rng.gen_range(-1.0..1.0), Concept::Fear);
        memory_update(&mut reg, "s", &p).unwrap();
    }
    let m = reg.get("s").unwrap();
    let per_neuron: Vec<f64> = m.network.neurons().iter().filter_map(|n| n.annotation.mean_valence()).collect();
    assert!(per_neuron.len() > 2);
    let naive = per_neuron.iter().sum::<f64>() / per_neuron.len() as f64;
    assert!((mean_memory_valence(m) - naive).abs() < 1e-12);
}

#[test]
fn memories_are_created_on_first_sight_and_isolated() {
    let mut rng = common::rng(2);
    let mut reg = MemoryRegistry::default();
    memory_update(&mut reg, "ana", &percept(near(&mut rng, 0.0, 4), 0.6, 0.7, Concept::Happiness)).unwrap();
    assert_eq!(reg.get("ana").unwrap().network.len(), 2);
    for i in 0..200 {
        let who = if i % 2 == 0 { "ana" } else { "ben" };
        let before = serde_json::to_string(&reg.get(if who == "ana" { "ben" } else { "ana" })).unwrap();
        let center = if who == "ana" { 0.0 } else { 5.0 * (i % 7) as f64 };
        memory_update(&mut reg, who, &percept(near(&mut rng, center, 4), 0.5, 0.1, Concept::Neutral)).unwrap();
        let after = serde_json::to_string(&reg.get(if who == "ana" { "ben" } else { "ana" })).unwrap();
        assert_eq!(before, after);
    }
    // one tight cluster versus seven separated ones
    assert!(reg.get("ben").unwrap().network.len() > reg.get("ana").unwrap().network.len());
}

#[test]
fn only_happy_percepts_give_a_positive_memory() {
    let mut rng = common::rng(3);
    let mut reg = MemoryRegistry::default();
    for _ in 0..50 {
        memory_update(&mut reg, "s", &percept(near(&mut rng, 1.0, 4), 0.7, 0.8, Concept::Happiness)).unwrap();
    }
    assert!(mean_memory_valence(reg.get("s").unwrap()) > 0.0);
}

#[test]
fn constant_stream_gives_a_constant_trajectory() {
    let mut reg = MemoryRegistry::default();
    let p = percept(vec![0.3, -0.2, 0.9], 0.4, -0.3, Concept::Sadness);
    let mut snaps = Vec::new();
    for t in 0..60u64 {
        memory_update(&mut reg, "s", &p).unwrap();
        snaps.push((t * 100, reg.get("s").unwrap().clone()));
    }
    let refs: Vec<(u64, &AffectiveMemory)> = snaps.iter().map(|(t, m)| (*t, m)).collect();
    let traj = memory_trajectory(&refs).unwrap();
    assert_eq!(traj.len(), 60);
    for w in traj[10..].windows(2) {
        assert!((w[0].valence - w[1].valence).abs() < 1e-6 && (w[0].arousal - w[1].arousal).abs() < 1e-6);
    }
    assert!((traj[59].valence + 0.3).abs() < 1e-6);
    assert_eq!(memory_trajectory(&refs[..1]).unwrap().len(), 1);
    assert!(memory_trajectory(&[]).is_err());
}

#[test]
fn valence_flip_reaches_the_memory_within_twenty_events() {
    for seed in 0..5 {
        let mut rng = common::rng(seed);
        let mut reg = MemoryRegistry::default();
        let flip_at = 40;
        let mut flipped = None;
        for i in 0..flip_at + 40 {
            // the generator switches both expression and appraisal at the flip
            let (center, v, c) = if i < flip_at { (0.0, 0.7, Concept::Happiness) } else { (8.0, -0.7, Concept::Sadness) };
            let v = v + rng.gen_range(-0.1..0.1);
            let m = memory_update(&mut reg, "s", &percept(near(&mut rng, center, 6), 0.5, v, c)).unwrap();
            let mv = mean_memory_valence(m);
            if i < flip_at {
                assert!(mv > 0.0);
            } else if mv < 0.0 && flipped.is_none() {
                flipped = Some(i - flip_at + 1);
            }
        }
        let lag = flipped.expect("memory valence never turned negative");
        assert!(lag <= 20, "seed {seed}: lag {lag}");
    }
}

#[test]
fn zero_reps_leave_the_mood_untouched() {
    let mut mood = MoodState::new(1.0).unwrap();
    let seed_stream = [(0.6, 0.5), (0.4, 0.7), (0.7, 0.2)];
    for (a, v) in seed_stream {
        mood_update(&mut mood, &percept(vec![0.0], a, v, Concept::Happiness), None).unwrap();
    }
    let before = serde_json::to_string(&mood).unwrap();
    // below-neutral percept with an empty memory: M = 1 - exp(0.5) < 0
    let reps = mood_update(&mut mood, &percept(vec![0.0], 0.8, -0.6, Concept::Anger), None).unwrap();
    assert_eq!(reps, 0);
    assert_eq!(serde_json::to_string(&mood).unwrap(), before);
}

#[test]
fn memory_polarity_orders_the_update_counts() {
    let pos = memory_with(&[0.8, 0.6, 0.9]);
    let neg = memory_with(&[-0.8, -0.6, -0.9]);
    let mut rng = common::rng(12);
    let stream: Vec<Percept> =
        (0..100).map(|_| percept(vec![0.0], rng.gen_range(0.3..0.9), rng.gen_range(0.1..1.0), Concept::Happiness)).collect();
    let run = |mem: &AffectiveMemory| {
        let mut mood = MoodState::new(1.0).unwrap();
        for p in &stream {
            mood_update(&mut mood, p, Some(mem)).unwrap();
        }
        mood.updates
    };
    assert!(run(&pos) > run(&neg), "{} vs {}", run(&pos), run(&neg));
}

#[test]
fn mood_sees_perception_only_through_appraisals() {
    let mut rng = common::rng(5);
    let (mut a, mut b) = (MoodState::new(1.5).unwrap(), MoodState::new(1.5).unwrap());
    for i in 0..200 {
        let (ar, v) = (rng.gen_range(0.0..=1.0), rng.gen_range(-1.0..=1.0));
        let c = Concept::ALL[i % 7];
        let pa = Percept { bmu_index: i, ..percept(near(&mut rng, 0.0, 5), ar, v, c) };
        let pb = Percept { bmu_index: 3, ..percept(near(&mut rng, 9.0, 2), ar, v, c) };
        assert_eq!(mood_update(&mut a, &pa, None).unwrap(), mood_update(&mut b, &pb, None).unwrap());
    }
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn memory_injection_adds_one_step_per_repeated_percept() {
    let mem = memory_with(&[0.5, 0.7]);
    let mut mood = MoodState::new(1.0).unwrap();
    mood.inject_memory = true;
    let annotated = mem.network.neurons().iter().find(|n| n.annotation.count > 0).unwrap().weight.clone();
    let reps = mood_update(&mut mood, &percept(annotated, 0.6, 0.6, Concept::Happiness), Some(&mem)).unwrap();
    assert!(reps > 0);
    assert_eq!(mood.updates, reps as u64 + 1);
    // a winner without appraisals has nothing to inject
    let bare = mem.network.neurons().iter().find(|n| n.annotation.count == 0).map(|n| n.weight.clone());
    if let Some(w) = bare {
        let before = mood.updates;
        let reps = mood_update(&mut mood, &percept(w, 0.6, 0.6, Concept::Happiness), Some(&mem)).unwrap();
        assert_eq!(mood.updates, before + reps as u64);
    }
}

#[test]
fn online_perception_drifts_less_than_five_points() {
    let dir = tempfile::tempdir().unwrap();
    let s = settings(QUICK);
    let (_, data, mut st) = quick_pipeline(dir.path(), &s);
    let model = st.model.take().unwrap();
    let heads = st.heads.take().unwrap();
    let xs: Vec<Vec<f64>> = data.iter().map(|e| represent(&model, e).unwrap()).collect();
    let truth: Vec<Concept> = data.iter().map(|e| e.annotation().unwrap().concept).collect();
    let accuracy = |net: &mut GwrNetwork| {
        let hits = xs
            .iter()
            .zip(&truth)
            .filter(|(x, t)| perceive(net, &heads, x, PerceptionMode::Frozen).unwrap().concept() == **t)
            .count();
        hits as f64 / xs.len() as f64
    };
    let mut net = st.perception.take().unwrap();
    let before = accuracy(&mut net);
    let mut rng = common::rng(1);
    for _ in 0..3 {
        for i in rand::seq::index::sample(&mut rng, xs.len(), xs.len()) {
            perceive(&mut net, &heads, &xs[i], PerceptionMode::Online).unwrap();
        }
    }
    let after = accuracy(&mut net);
    assert!(before - after <= 0.05, "accuracy {before} -> {after}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mood_stays_inside_the_av_box(
        stream in proptest::collection::vec((0.0f64..=1.0, -1.0f64..=1.0), 1..120),
        strength in 0.2f64..4.0,
        memory_valence in -1.0f64..=1.0,
    ) {
        let mem = memory_with(&[memory_valence]);
        let mut mood = MoodState::new(strength).unwrap();
        for (a, v) in stream {
            mood_update(&mut mood, &percept(vec![0.0, 0.0], a, v, Concept::Neutral), Some(&mem)).unwrap();
            for n in mood.network.neurons() {
                prop_assert!((0.0..=1.0).contains(&n.weight[0]) && (-1.0..=1.0).contains(&n.weight[1]));
            }
        }
    }

    #[test]
    fn mapped_valence_scale(v in -1.0f64..=1.0) {
        let u = valence_to_unit(v);
        prop_assert!((0.0..=1.0).contains(&u));
        prop_assert!((u - (v + 1.0) / 2.0).abs() < 1e-15);
    }
}

#[test]
fn annotation_samples_fold_into_the_winner() {
    let mut net = GwrNetwork::new(1, memory_params()).unwrap();
    let s = |v| AnnotationSample { arousal: 0.5, valence: v, concepts: Concept::Fear.one_hot() };
    net.step(&[0.0], Some(&s(0.2))).unwrap();
    net.step(&[0.0], Some(&s(0.4))).unwrap();
    net.step(&[0.0], Some(&s(0.6))).unwrap();
    assert!((net.mean_valence().unwrap() - 0.4).abs() < 1e-12);
}

mod common;

use emocircuit::gwr::{habituate, train, AnnotationSample, Edge, GwrNetwork, GwrNeuron, GwrParams, StepEvent};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Normal};

fn neuron(w: Vec<f64>, k: usize) -> GwrNeuron {
    let d = w.len();
    GwrNeuron::new(w, vec![vec![0.0; d]; k], 0)
}

#[test]
fn single_neuron_is_always_the_winner() {
    let net = GwrNetwork::from_parts(GwrParams::default(), vec![neuron(vec![3.0, -1.0], 2)], vec![], vec![vec![0.0; 2]; 2], None)
        .unwrap();
    for x in [[0.0, 0.0], [100.0, 5.0], [3.0, -1.0]] {
        let b = net.find_bmu(&x).unwrap();
        assert_eq!((b.index, b.second), (0, 0));
    }
}

#[test]
fn context_free_winner_by_exhaustive_evaluation() {
    let params = GwrParams { alpha: vec![1.0], ..GwrParams::default() };
    let net = GwrNetwork::from_parts(
        params,
        vec![neuron(vec![0.0], 0), neuron(vec![10.0], 0)],
        vec![Edge { a: 0, b: 1, age: 0 }],
        vec![],
        None,
    )
    .unwrap();
    let b = net.find_bmu(&[1.0]).unwrap();
    assert_eq!(b.index, 0);
    assert_eq!(b.distance, 1.0);
    assert_eq!(net.distance(1, &[1.0]), 81.0);
}

#[test]
fn winner_matches_brute_force_on_random_networks() {
    let mut rng = common::rng(2024);
    for trial in 0..1000 {
        let n = rng.gen_range(1..=50);
        let dim = rng.gen_range(1..=6);
        let mut draw = |len: usize| -> Vec<f64> {
            // coarse grid so exact ties happen now and then
            (0..len).map(|_| (rng.gen_range(-4i32..=4) as f64) * 0.5).collect()
        };
        let weights: Vec<Vec<f64>> = (0..n).map(|_| draw(dim)).collect();
        let contexts: Vec<Vec<Vec<f64>>> = (0..n).map(|_| (0..2).map(|_| draw(dim)).collect()).collect();
        let global: Vec<Vec<f64>> = (0..2).map(|_| draw(dim)).collect();
        let x = draw(dim);
        let neurons = weights
            .iter()
            .zip(&contexts)
            .map(|(w, c)| {
                let mut nr = neuron(w.clone(), 2);
                nr.contexts = c.clone();
                nr
            })
            .collect();
        let params = GwrParams::default();
        let alpha = params.alpha.clone();
        let net = GwrNetwork::from_parts(params, neurons, vec![], global.clone(), None).unwrap();
        let want = common::brute_force_bmu(&x, &weights, &contexts, &global, &alpha);
        assert_eq!(net.find_bmu(&x).unwrap().index, want, "trial {trial}");
    }
}

fn two_neuron_net(beta: f64) -> GwrNetwork {
    let params = GwrParams { beta, ..GwrParams::default() };
    let mut a = neuron(vec![1.0, 2.0], 2);
    a.contexts = vec![vec![0.5, -0.5], vec![3.0, 1.0]];
    let b = neuron(vec![-1.0, 0.0], 2);
    GwrNetwork::from_parts(params, vec![a, b], vec![Edge { a: 0, b: 1, age: 0 }], vec![vec![9.0, 9.0]; 2], Some(0))
        .unwrap()
}

#[test]
fn context_update_at_beta_one_copies_the_previous_weight() {
    let mut net = two_neuron_net(1.0);
    let c = net.update_global_context().to_vec();
    assert_eq!(c, vec![vec![1.0, 2.0], vec![1.0, 2.0]]);
}

#[test]
fn context_update_at_beta_zero_shifts_the_previous_contexts() {
    let mut net = two_neuron_net(0.0);
    let c = net.update_global_context().to_vec();
    assert_eq!(c, vec![vec![1.0, 2.0], vec![0.5, -0.5]]);
}

#[test]
fn context_update_by_hand() {
    let mut net = two_neuron_net(0.7);
    let c = net.update_global_context().to_vec();
    // C_1 = 0.7 w + 0.3 w = w ; C_2 = 0.7 w + 0.3 c_1
    let want = [[1.0, 2.0], [0.7 * 1.0 + 0.3 * 0.5, 0.7 * 2.0 + 0.3 * -0.5]];
    for k in 0..2 {
        for i in 0..2 {
            assert!((c[k][i] - want[k][i]).abs() < 1e-12);
        }
    }
}

#[test]
fn first_step_starts_from_zero_contexts() {
    let mut net = GwrNetwork::new(2, GwrParams::default()).unwrap();
    assert!(net.global_contexts().iter().all(|c| c.iter().all(|&v| v == 0.0)));
    net.step(&[0.3, 0.4], None).unwrap();
    assert!(net.neurons().iter().all(|n| n.contexts.iter().all(|c| c.iter().all(|&v| v == 0.0))));
}

#[test]
fn exact_match_only_adapts() {
    let mut net = GwrNetwork::with_initial(&[0.0, 0.0], &[5.0, 5.0], GwrParams::default()).unwrap();
    let out = net.step(&[0.0, 0.0], None).unwrap();
    assert_eq!(out.activity, 1.0);
    assert_eq!(out.event, StepEvent::Adapted);
    assert_eq!(net.len(), 2);
}

#[test]
fn habituated_winner_far_from_input_inserts() {
    let mut a = neuron(vec![0.0], 2);
    a.habituation = 0.05;
    let b = neuron(vec![-1.0], 2);
    let mut net =
        GwrNetwork::from_parts(GwrParams::default(), vec![a, b], vec![Edge { a: 0, b: 1, age: 0 }], vec![vec![0.0]; 2], None)
            .unwrap();
    let out = net.step(&[50.0], None).unwrap();
    assert_eq!(out.event, StepEvent::Inserted(2));
    assert_eq!(net.len(), 3);
    assert_eq!(net.neurons()[2].weight, vec![25.0]);
    let keys: Vec<(usize, usize)> = net.edges().iter().map(|e| (e.a, e.b)).collect();
    assert_eq!(keys, vec![(0, 2), (1, 2)]);
    net.check_well_formed().unwrap();
}

#[test]
fn zero_edge_age_keeps_only_the_refreshed_edge() {
    let params = GwrParams { max_edge_age: 0, ..GwrParams::default() };
    let mut net = GwrNetwork::new(1, params).unwrap();
    let mut rng = common::rng(5);
    for _ in 0..200 {
        let out = net.step(&[rng.gen_range(-3.0..3.0)], None).unwrap();
        let edges = net.edges();
        let key = (out.bmu.min(out.second), out.bmu.max(out.second));
        match out.event {
            StepEvent::Inserted(r) => {
                // the new neuron's two edges are created in this step
                assert!(edges.iter().all(|e| e.age == 0));
                assert_eq!(edges.iter().filter(|e| e.a == r || e.b == r).count(), 2);
                assert!(!edges.iter().any(|e| (e.a, e.b) == key));
            }
            _ => {
                assert!(edges.iter().all(|e| e.age == 0));
                let at_bmu: Vec<_> = edges.iter().filter(|e| e.a == out.bmu || e.b == out.bmu).collect();
                assert_eq!(at_bmu.len(), 1);
                assert_eq!((at_bmu[0].a, at_bmu[0].b), key);
            }
        }
        net.check_well_formed().unwrap();
    }
}

#[test]
fn habituation_examples() {
    assert!((habituate(1.0, 0.3, 1.05, 1e-6) - 0.7).abs() < 1e-15);
    assert_eq!(habituate(0.3, 0.0, 1.05, 1e-6), 0.3);
}

proptest! {
    #[test]
    fn repeated_wins_decrease_toward_the_fixed_point(tau in 0.01f64..0.5, kappa in 1.0f64..2.0, h0 in 0.2f64..=1.0) {
        let fixed = 1.0 - 1.0 / kappa;
        prop_assume!(h0 > fixed + 1e-9);
        let mut h = h0;
        for _ in 0..200 {
            let next = habituate(h, tau, kappa, 1e-9);
            prop_assert!(next > 0.0 && next <= 1.0);
            prop_assert!(next <= h + 1e-15);
            prop_assert!(next >= fixed.max(1e-9) - 1e-12);
            h = next;
        }
    }

    #[test]
    fn graph_stays_well_formed(seed in 0u64..500, max_age in 0u32..20, a_t in 0.0f64..1.0) {
        let params = GwrParams { a_t, max_edge_age: max_age, ..GwrParams::default() };
        let mut net = GwrNetwork::new(2, params).unwrap();
        let mut rng = common::rng(seed);
        for _ in 0..100 {
            let x = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            net.step(&x, None).unwrap();
            prop_assert!(net.check_well_formed().is_ok());
            prop_assert!(net.len() >= 2);
        }
    }
}

/// Replays every decision of an instrumented run against the insertion rule.
#[test]
fn insertion_happens_exactly_when_the_rule_says() {
    let params = GwrParams { a_t: 0.3, max_edge_age: 50, ..GwrParams::default() };
    let mut net = GwrNetwork::new(3, params.clone()).unwrap();
    let mut rng = common::rng(77);
    let mut inserted = 0;
    for t in 0..10_000 {
        let centre = (t / 500) as f64;
        let x: Vec<f64> = (0..3).map(|_| centre + rng.gen_range(-1.5..1.5)).collect();
        let mut probe = net.clone();
        let expected = if probe.is_empty() {
            None
        } else {
            probe.update_global_context();
            let b = probe.find_bmu(&x).unwrap();
            Some(((-b.distance).exp(), probe.neurons()[b.index].habituation))
        };
        let out = net.step(&x, None).unwrap();
        if let Some((a, h)) = expected {
            assert_eq!((out.activity, out.bmu_habituation), (a, h));
            let should = a < params.a_t && h < params.h_t;
            assert_eq!(matches!(out.event, StepEvent::Inserted(_)), should, "step {t}");
            inserted += should as usize;
        }
        net.check_well_formed().unwrap();
    }
    assert!(inserted > 10, "run should exercise insertion, got {inserted}");
}

fn clusters(seed: u64, per: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = common::rng(seed);
    let noise = Normal::new(0.0, 0.15).unwrap();
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for c in 0..7 {
        let angle = c as f64 * std::f64::consts::TAU / 7.0;
        let centre = [4.0 * angle.cos(), 4.0 * angle.sin()];
        for _ in 0..per {
            data.push(vec![centre[0] + noise.sample(&mut rng), centre[1] + noise.sample(&mut rng)]);
            labels.push(c);
        }
    }
    (data, labels)
}

fn purity(net: &GwrNetwork, data: &[Vec<f64>], labels: &[usize]) -> f64 {
    let nearest = |x: &[f64]| {
        let mut best = (0, f64::INFINITY);
        for (j, n) in net.neurons().iter().enumerate() {
            let d: f64 = n.weight.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best.1 {
                best = (j, d);
            }
        }
        best.0
    };
    let mut votes = vec![[0usize; 7]; net.len()];
    let assigned: Vec<usize> = data.iter().map(|x| nearest(x)).collect();
    for (&j, &l) in assigned.iter().zip(labels) {
        votes[j][l] += 1;
    }
    let majority: Vec<usize> = votes.iter().map(|v| (0..7).max_by_key(|&c| (v[c], usize::MAX - c)).unwrap()).collect();
    let good = assigned.iter().zip(labels).filter(|(&j, &l)| majority[j] == l).count();
    good as f64 / data.len() as f64
}

#[test]
fn separated_clusters_get_their_own_neurons() {
    let (data, labels) = clusters(3, 40);
    let (net, report) = train(&data, None, GwrParams::default(), 10, 9).unwrap();
    assert!(net.len() >= 7, "{} neurons", net.len());
    assert!(purity(&net, &data, &labels) >= 0.95);
    let qe = &report.quantization_errors;
    for w in qe.windows(2).skip(1) {
        assert!(w[1] <= w[0] * 1.05, "{qe:?}");
    }
}

#[test]
fn a_single_repeated_point_never_grows() {
    let data = vec![vec![0.5, -0.5]; 30];
    let (net, report) = train(&data, None, GwrParams::default(), 1, 0).unwrap();
    assert_eq!(net.len(), 2);
    assert_eq!(report.neuron_counts, vec![2]);
}

#[test]
fn training_is_deterministic() {
    let (data, _) = clusters(8, 15);
    let ann: Vec<AnnotationSample> = (0..data.len())
        .map(|i| AnnotationSample { arousal: 0.5, valence: (i % 3) as f64 - 1.0, concepts: [1.0 / 7.0; 7] })
        .collect();
    let a = train(&data, Some(&ann), GwrParams::default(), 3, 4).unwrap().0;
    let b = train(&data, Some(&ann), GwrParams::default(), 3, 4).unwrap().0;
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
}

#[test]
fn exports_list_every_neuron_and_edge() {
    let (data, _) = clusters(1, 5);
    let ann = vec![AnnotationSample { arousal: 0.2, valence: -0.4, concepts: emocircuit::affect::Concept::Sadness.one_hot() }; data.len()];
    let (net, _) = train(&data, Some(&ann), GwrParams::default(), 2, 1).unwrap();
    let csv = emocircuit::gwr::to_csv(&net);
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "id,habituation,age,wins,arousal_mean,valence_mean,concept,w0,w1");
    assert_eq!(lines.count(), net.len());
    assert!(csv.contains(",sadness,"));
    let dot = emocircuit::gwr::to_dot(&net, "perception");
    assert!(dot.starts_with("graph \"perception\" {"));
    assert_eq!(dot.matches(" -- ").count(), net.edges().len());
    assert!(dot.contains("[age="));
}

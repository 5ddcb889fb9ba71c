use emocircuit_wasm_demo::{modulator_curve, tone_mfcc, GwrDemo};

#[test]
fn gwr_covers_two_clusters() {
    let mut demo = GwrDemo::new(0.9, 100).unwrap();
    let xy: Vec<f64> = (0..40).flat_map(|i| {
        let c = if i < 20 { 0.2 } else { 0.8 };
        [c + 0.01 * (i % 5) as f64, c - 0.01 * (i % 3) as f64]
    }).collect();
    demo.fit(&xy, 5).unwrap();
    let w = demo.weights();
    assert_eq!(w.len(), 2 * demo.neuron_count());
    let near = |c: f64| w.chunks(2).any(|p| (p[0] - c).abs() < 0.1 && (p[1] - c).abs() < 0.1);
    assert!(near(0.2) && near(0.8), "{w:?}");
    assert!(demo.edges().iter().all(|&i| (i as usize) < demo.neuron_count()));
}

#[test]
fn modulator_curve_has_three_regimes() {
    let c = modulator_curve(0.0, 1.0, 11).unwrap();
    assert_eq!(c.len(), 22);
    assert_eq!((c[0], c[1]), (0.0, 0.0));
    assert_eq!((c[10], c[11]), (1.0, 1.0));
    assert_eq!((c[20], c[21]), (2.0, 2.0));
}

#[test]
fn tone_map_is_26_by_35() {
    let m = tone_mfcc(440.0, 0.5).unwrap();
    assert_eq!(m.len(), 26 * 35);
    assert!(m.iter().all(|v| v.is_finite()));
}

use emocircuit::affect::Concept;
use emocircuit::frontend::audio::{mfcc_frames, MFCC_COEFFS};
use emocircuit::frontend::{mfcc_extract, synth_stream, AudioClip, SegmentSpec, SynthConfig};
use emocircuit::session::event::load_visual;
use emocircuit::frontend::WindowChoice;
use proptest::prelude::*;
use rand::Rng;
use std::f64::consts::PI;

mod common;

/// Straightforward MFCC: direct DFT, textbook Mel scale and DCT-II, 98
/// frames thinned to 35 by rounding evenly spaced positions.
fn reference_mfcc(x: &[f64]) -> Vec<Vec<f64>> {
    let (sr, frame, hop, nfft, bands) = (16_000.0, 400, 160, 1024, 26);
    let mel = |f: f64| 2595.0 * (1.0 + f / 700.0).log10();
    let inv = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
    let top = mel(8000.0);
    let edges: Vec<f64> = (0..bands + 2).map(|i| inv(top * i as f64 / (bands + 1) as f64)).collect();
    let tri = |b: usize, f: f64| {
        let (l, c, r) = (edges[b], edges[b + 1], edges[b + 2]);
        if f > l && f <= c {
            (f - l) / (c - l)
        } else if f > c && f < r {
            (r - f) / (r - c)
        } else {
            0.0
        }
    };
    let n_frames = (x.len() - frame) / hop + 1;
    let frames: Vec<Vec<f64>> = (0..n_frames)
        .map(|t| {
            let seg: Vec<f64> = (0..frame)
                .map(|n| x[t * hop + n] * (0.5 - 0.5 * (2.0 * PI * n as f64 / (frame - 1) as f64).cos()))
                .collect();
            let mag: Vec<f64> = (0..=nfft / 2)
                .map(|k| {
                    let (mut re, mut im) = (0.0, 0.0);
                    for (n, s) in seg.iter().enumerate() {
                        let a = -2.0 * PI * (k * n) as f64 / nfft as f64;
                        re += s * a.cos();
                        im += s * a.sin();
                    }
                    (re * re + im * im).sqrt()
                })
                .collect();
            let logs: Vec<f64> = (0..bands)
                .map(|b| {
                    let e: f64 = mag.iter().enumerate().map(|(k, m)| tri(b, k as f64 * sr / nfft as f64) * m).sum();
                    e.max(1e-10).ln()
                })
                .collect();
            (0..26)
                .map(|k| {
                    let s: f64 = logs
                        .iter()
                        .enumerate()
                        .map(|(i, v)| v * (PI * k as f64 * (i as f64 + 0.5) / bands as f64).cos())
                        .sum();
                    if k == 0 {
                        s / bands as f64
                    } else {
                        2.0 * s / bands as f64
                    }
                })
                .collect()
        })
        .collect();
    (0..35).map(|i| frames[((i * (n_frames - 1)) as f64 / 34.0).round() as usize].clone()).collect()
}

fn tone(freq: f64, amp: f64) -> Vec<f64> {
    (0..16_000).map(|n| amp * (2.0 * PI * freq * n as f64 / 16_000.0).sin()).collect()
}

fn white_noise(seed: u64) -> Vec<f64> {
    let mut rng = common::rng(seed);
    (0..16_000).map(|_| rng.gen_range(-0.5..0.5)).collect()
}

/// Mean over time of coefficients 1..25.
fn spectral_shape(map: &[Vec<f64>]) -> Vec<f64> {
    (1..26).map(|c| map.iter().map(|f| f[c]).sum::<f64>() / map.len() as f64).collect()
}

fn as_frames(t: &emocircuit::Tensor) -> Vec<Vec<f64>> {
    (0..35).map(|f| (0..26).map(|c| t.data()[c * 35 + f]).collect()).collect()
}

#[test]
fn mfcc_matches_an_independent_reference() {
    let a440 = tone(440.0, 0.5);
    let noise = white_noise(3);
    let mut shapes = Vec::new();
    for x in [&a440, &noise] {
        let ours = as_frames(mfcc_extract(&AudioClip::new(x.clone(), 16_000).unwrap()).tensor());
        let theirs = reference_mfcc(x);
        for (a, b) in ours.iter().zip(&theirs) {
            assert!(common::max_abs_diff(a, b) < 1e-6, "{}", common::max_abs_diff(a, b));
        }
        shapes.push((spectral_shape(&ours), spectral_shape(&theirs)));
    }
    let gap = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let ours = gap(&shapes[0].0, &shapes[1].0);
    let theirs = gap(&shapes[0].1, &shapes[1].1);
    assert!(ours > 1.0, "tone and noise shapes only {ours} apart");
    assert!((ours - theirs).abs() < 1e-6);
}

#[test]
fn output_shape_is_fixed() {
    for x in [tone(100.0, 0.9), white_noise(8), vec![0.0; 16_000]] {
        assert_eq!(mfcc_extract(&AudioClip::new(x, 16_000).unwrap()).tensor().shape(), &[26, 35]);
    }
}

#[test]
fn circular_shift_by_one_hop_moves_frames_by_one() {
    // 250 Hz has period 64 samples; 160 Hz has period 100; both signals are
    // periodic over the one-second clip
    for x in [tone(250.0, 0.4), tone(160.0, 0.3).iter().zip(tone(1000.0, 0.2)).map(|(a, b)| a + b).collect()] {
        let shifted: Vec<f64> = (0..16_000).map(|n| x[(n + 160) % 16_000]).collect();
        let a = mfcc_frames(&AudioClip::new(x.clone(), 16_000).unwrap());
        let b = mfcc_frames(&AudioClip::new(shifted, 16_000).unwrap());
        let key = |f: &[f64; MFCC_COEFFS]| f.to_vec();
        let mut ma: Vec<Vec<f64>> = a[1..].iter().map(key).collect();
        let mut mb: Vec<Vec<f64>> = b[..b.len() - 1].iter().map(key).collect();
        let cmp = |p: &Vec<f64>, q: &Vec<f64>| p.iter().zip(q).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal);
        ma.sort_by(cmp);
        mb.sort_by(cmp);
        for (p, q) in ma.iter().zip(&mb) {
            assert!(common::max_abs_diff(p, q) < 1e-6);
        }
    }
}

#[test]
fn resampled_pcm_is_one_second() {
    let pcm: Vec<i16> = (0..44_100).map(|i| ((i as f64 * 0.05).sin() * 10_000.0) as i16).collect();
    let clip = AudioClip::from_pcm(&pcm, 44_100).unwrap();
    assert_eq!(clip.samples().len(), 16_000);
    assert!(AudioClip::from_pcm(&pcm, 0).is_err());
}

fn config(spec: &str, noise: f64) -> SynthConfig {
    SynthConfig { segments: vec![SegmentSpec::parse(spec).unwrap()], noise, ..Default::default() }
}

#[test]
fn same_seed_same_stream() {
    let cfg = config("a:t:fear*2,happiness*2", 0.1);
    let a = synth_stream(&cfg, 9).unwrap();
    let b = synth_stream(&cfg, 9).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.event, y.event);
        assert_eq!(x.visual.to_bytes(), y.visual.to_bytes());
        assert_eq!(x.audio.to_pcm16(), y.audio.to_pcm16());
    }
    let c = synth_stream(&cfg, 10).unwrap();
    assert_ne!(a[0].audio.to_pcm16(), c[0].audio.to_pcm16());
}

#[test]
fn unknown_concept_is_rejected() {
    assert!(SegmentSpec::parse("a:t:bliss*2").is_err());
}

fn nearest_centroid_accuracy(xs: &[Vec<f64>], labels: &[usize]) -> f64 {
    let dim = xs[0].len();
    let mut sums = vec![vec![0.0; dim]; 7];
    let mut counts = [0usize; 7];
    for (x, &l) in xs.iter().zip(labels) {
        counts[l] += 1;
        sums[l].iter_mut().zip(x).for_each(|(s, v)| *s += v);
    }
    let cents: Vec<Vec<f64>> =
        sums.iter().zip(counts).map(|(s, c)| s.iter().map(|v| v / c.max(1) as f64).collect()).collect();
    let hits = xs
        .iter()
        .zip(labels)
        .filter(|(x, &l)| {
            let d = |c: &Vec<f64>| c.iter().zip(x.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            let best = (0..7).filter(|&k| counts[k] > 0).min_by(|&a, &b| d(&cents[a]).total_cmp(&d(&cents[b]))).unwrap();
            best == l
        })
        .count();
    hits as f64 / xs.len() as f64
}

#[test]
fn noise_free_templates_are_separable() {
    let spec = Concept::ALL.map(|c| format!("{}*4", c.name())).join(",");
    let events = synth_stream(&config(&format!("a:t:{spec}"), 0.0), 5).unwrap();
    let labels: Vec<usize> = events.iter().map(|e| e.event.annotation.unwrap().concept.index()).collect();
    let pixels: Vec<Vec<f64>> = events.iter().map(|e| e.visual.tensor().data().to_vec()).collect();
    let cepstra: Vec<Vec<f64>> = events.iter().map(|e| mfcc_extract(&e.audio).tensor().data().to_vec()).collect();
    assert_eq!(nearest_centroid_accuracy(&pixels, &labels), 1.0);
    assert_eq!(nearest_centroid_accuracy(&cepstra, &labels), 1.0);
}

#[test]
fn image_directories_are_read_as_frames() {
    let dir = tempfile::tempdir().unwrap();
    for i in 0..30u8 {
        let img = image::GrayImage::from_fn(8, 8, |x, y| image::Luma([i * 8 + (x + y) as u8]));
        img.save(dir.path().join(format!("f{i:03}.png"))).unwrap();
    }
    let clip = load_visual(dir.path(), WindowChoice::Center).unwrap();
    assert_eq!(clip.tensor().shape(), &[9, 8, 8]);
    // the centered window starts at frame 10
    assert_eq!(clip.tensor().data()[0], 80.0 / 255.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generated_events_satisfy_their_invariants(
        side in 2usize..20,
        noise in 0.0f64..0.6,
        jitter in 0.0f64..0.5,
        concepts in proptest::collection::vec(0usize..7, 1..4),
        seed in any::<u64>(),
    ) {
        let spec = concepts.iter().map(|&i| Concept::ALL[i].name()).collect::<Vec<_>>().join(",");
        let cfg = SynthConfig {
            segments: vec![SegmentSpec::parse(&format!("s:t:{spec}")).unwrap()],
            noise,
            side,
            affect_jitter: jitter,
            ..Default::default()
        };
        for e in synth_stream(&cfg, seed).unwrap() {
            prop_assert_eq!(e.visual.tensor().shape(), &[9, side, side]);
            prop_assert!(e.visual.tensor().data().iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert_eq!(e.audio.samples().len(), 16_000);
            let a = e.event.annotation.unwrap();
            prop_assert!((0.0..=1.0).contains(&a.arousal) && (-1.0..=1.0).contains(&a.valence));
            prop_assert!(a.validate().is_ok());
        }
    }
}

//! Parametric audio-visual stimuli standing in for recorded sessions.
//!
//! Each concept owns a visual template (an oriented grating plus a placed
//! blob) and an audio template (a fundamental with a concept-specific pitch
//! and noise mix). Valence is encoded linearly in mean frame intensity and in
//! the second-harmonic level; arousal in the depth of the grating's contrast
//! flicker and in tone loudness. `noise` adds white noise to pixels and
//! samples.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::PI;

use super::audio::{AudioClip, CLIP_SAMPLES, SAMPLE_RATE};
use super::visual::{assemble_visual_clip, VisualClip, WindowChoice, FPS};
use crate::affect::{valence_to_unit, Annotation, Concept};
use crate::error::{Error, Result};
use crate::session::{AudioRef, SessionEvent};
use crate::tensor::Tensor;

/// A run of consecutive events from one subject within one topic.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentSpec {
    pub subject: String,
    pub topic: String,
    /// Target concept of each event, in order.
    pub concepts: Vec<Concept>,
}

impl SegmentSpec {
    /// Parses `subject:topic:concept*count,concept*count,...`.
    pub fn parse(s: &str) -> Result<Self> {
        let mut parts = s.splitn(3, ':');
        let (Some(subject), Some(topic), Some(seq)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::Validation(format!(
                "segment '{s}' must look like subject:topic:concept*count,..."
            )));
        };
        let mut concepts = Vec::new();
        for item in seq.split(',').filter(|i| !i.trim().is_empty()) {
            let (name, count) = match item.split_once('*') {
                Some((n, c)) => (
                    n,
                    c.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::Validation(format!("bad repeat count in '{item}'")))?,
                ),
                None => (item, 1),
            };
            let c: Concept = name.parse()?;
            concepts.extend(std::iter::repeat(c).take(count));
        }
        Ok(Self { subject: subject.trim().into(), topic: topic.trim().into(), concepts })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub segments: Vec<SegmentSpec>,
    /// Standard deviation of additive pixel noise; audio noise is scaled from it.
    pub noise: f64,
    /// Frame side in pixels.
    pub side: usize,
    /// Half-width of the uniform jitter added to each concept's typical affect.
    pub affect_jitter: f64,
    pub event_interval_ms: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { segments: Vec::new(), noise: 0.1, side: 16, affect_jitter: 0.15, event_interval_ms: 1000 }
    }
}

/// One generated event together with its decoded media.
#[derive(Debug, Clone)]
pub struct SyntheticEvent {
    pub event: SessionEvent,
    pub visual: VisualClip,
    pub audio: AudioClip,
}

fn concept_rng(seed: u64, index: usize, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ salt)
}

/// Annotation for one event: the concept's typical affect plus uniform jitter.
pub fn sample_annotation(concept: Concept, jitter: f64, rng: &mut impl Rng) -> Annotation {
    let (a, v) = concept.prototype_av();
    let mut j = || if jitter > 0.0 { rng.gen_range(-jitter..=jitter) } else { 0.0 };
    let arousal = (a + j()).clamp(0.0, 1.0);
    let valence = (v + j()).clamp(-1.0, 1.0);
    Annotation { arousal, valence, dominance: (0.5 + 0.4 * (arousal - 0.5)).clamp(0.0, 1.0), concept }
}

/// One grayscale frame of the concept's template at time `t_sec`.
pub fn visual_frame(
    concept: Concept,
    ann: &Annotation,
    side: usize,
    t_sec: f64,
    noise: f64,
    rng: &mut impl Rng,
) -> Tensor {
    let ci = concept.index() as f64;
    let theta = ci * PI / 7.0;
    let freq = 1.0 + (concept.index() % 3) as f64;
    // contrast flickers at 3 Hz, deeper for higher arousal
    let contrast = 1.0 - 0.5 * ann.arousal * (0.5 + 0.5 * (2.0 * PI * 3.0 * t_sec).sin());
    let (bx, by) = (
        0.2 + 0.6 * ((concept.index() * 3) % 7) as f64 / 6.0,
        0.2 + 0.6 * ((concept.index() * 5) % 7) as f64 / 6.0,
    );
    let level = valence_to_unit(ann.valence);
    Tensor::from_fn(&[side, side], |i| {
        let y = (i / side) as f64 / side as f64;
        let x = (i % side) as f64 / side as f64;
        let phase = 2.0 * PI * freq * (x * theta.cos() + y * theta.sin());
        let grating = 0.5 + 0.5 * contrast * phase.sin();
        let blob = (-((x - bx).powi(2) + (y - by).powi(2)) / 0.02).exp();
        let n: f64 = if noise > 0.0 { noise * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng) } else { 0.0 };
        (0.05 + 0.35 * grating + 0.25 * blob + 0.3 * level + n).clamp(0.0, 1.0)
    })
}

/// One second of the concept's audio template.
pub fn audio_clip(concept: Concept, ann: &Annotation, noise: f64, rng: &mut impl Rng) -> AudioClip {
    let f0 = 220.0 * 2f64.powf(concept.index() as f64 / 3.5);
    let loud = 0.1 + 0.3 * ann.arousal;
    let second = 0.25 * valence_to_unit(ann.valence);
    let hiss = 0.03 * (concept.index() % 3) as f64;
    let sr = SAMPLE_RATE as f64;
    let samples = (0..CLIP_SAMPLES)
        .map(|n| {
            let t = n as f64 / sr;
            let tone = (2.0 * PI * f0 * t).sin() + second * (4.0 * PI * f0 * t).sin();
            let g: f64 = StandardNormal.sample(rng);
            let w = hiss * g + if noise > 0.0 { 0.1 * noise * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng) } else { 0.0 };
            (loud * tone + w).clamp(-1.0, 1.0)
        })
        .collect();
    AudioClip::new(samples, SAMPLE_RATE).expect("generated clip has the canonical shape")
}

/// Generates the full event stream. Deterministic in `(config, seed)`.
pub fn synth_stream(config: &SynthConfig, seed: u64) -> Result<Vec<SyntheticEvent>> {
    if config.side == 0 {
        return Err(Error::Invalid("frame side must be positive".into()));
    }
    if !(config.noise >= 0.0) {
        return Err(Error::Invalid(format!("noise level must be non-negative, got {}", config.noise)));
    }
    let mut out = Vec::new();
    let mut index = 0usize;
    for seg in &config.segments {
        for &concept in &seg.concepts {
            let mut rng = concept_rng(seed, index, 0);
            let ann = sample_annotation(concept, config.affect_jitter, &mut rng);
            let frames: Vec<Tensor> = (0..FPS)
                .map(|f| visual_frame(concept, &ann, config.side, f as f64 / FPS as f64, config.noise, &mut rng))
                .collect();
            let window_seed = rng.gen();
            let visual = assemble_visual_clip(&frames, WindowChoice::Random(window_seed))?;
            let audio = audio_clip(concept, &ann, config.noise, &mut rng);
            let event = SessionEvent {
                t_ms: index as u64 * config.event_interval_ms,
                subject: seg.subject.clone(),
                topic: Some(seg.topic.clone()),
                visual: Some(format!("frames/e{index:06}.u8")),
                audio: Some(AudioRef { path: format!("audio/e{index:06}.pcm"), rate: SAMPLE_RATE }),
                annotation: Some(ann),
            };
            out.push(SyntheticEvent { event, visual, audio });
            index += 1;
        }
    }
    Ok(out)
}

//! Synthetic corpus layouts and decoded, ready-to-use events.

use std::path::Path;

use super::settings::SynthSettings;
use crate::affect::{Annotation, Concept};
use crate::cccnn::{auditory_batch, visual_batch, Batch, Cccnn};
use crate::error::{Error, Result};
use crate::frontend::{mfcc_extract, MfccMap, SegmentSpec, SynthConfig, VisualClip, WindowChoice};
use crate::session::{load_media, load_session, SessionEvent};

use Concept::*;

/// Concept pools per topic for subjects of positive and negative leaning.
/// Each leaning has one topic that runs against it.
const POSITIVE_TOPICS: [&[Concept]; 5] = [
    &[Happiness, Surprise],
    &[Happiness, Happiness, Neutral],
    &[Neutral, Sadness, Surprise],
    &[Surprise, Happiness],
    &[Happiness],
];
const NEGATIVE_TOPICS: [&[Concept]; 5] = [
    &[Anger, Sadness],
    &[Disgust, Fear, Sadness],
    &[Neutral, Surprise, Fear],
    &[Sadness, Anger, Disgust],
    &[Fear, Sadness],
];
pub const TOPICS: [&str; 5] = ["greeting", "lottery", "loss", "travel", "farewell"];
/// Subjects of the acceptance layout with their leaning.
pub const SUBJECTS: [(&str, bool); 4] = [("ana", true), ("ben", false), ("cai", true), ("dov", false)];

fn cycle(pool: &[Concept], n: usize, offset: usize) -> Vec<Concept> {
    (0..n).map(|i| pool[(i + offset) % pool.len()]).collect()
}

/// Topic-major layout: every subject takes a turn within each topic.
pub fn acceptance_segments(events_per_topic: usize) -> Vec<SegmentSpec> {
    let mut out = Vec::new();
    for (t, topic) in TOPICS.iter().enumerate() {
        for (s, (name, positive)) in SUBJECTS.iter().enumerate() {
            let pool = if *positive { POSITIVE_TOPICS[t] } else { NEGATIVE_TOPICS[t] };
            out.push(SegmentSpec {
                subject: name.to_string(),
                topic: topic.to_string(),
                concepts: cycle(pool, events_per_topic, s),
            });
        }
    }
    out
}

/// Two subjects, one topic each way, every concept present.
pub fn mini_segments(events_per_topic: usize) -> Vec<SegmentSpec> {
    vec![
        SegmentSpec { subject: "ana".into(), topic: "greeting".into(), concepts: cycle(&Concept::ALL, events_per_topic, 0) },
        SegmentSpec { subject: "ben".into(), topic: "greeting".into(), concepts: cycle(&Concept::ALL, events_per_topic, 3) },
    ]
}

pub fn synth_config(s: &SynthSettings) -> Result<SynthConfig> {
    let segments = match s.layout.as_str() {
        "acceptance" => acceptance_segments(s.events_per_topic),
        "mini" => mini_segments(s.events_per_topic),
        "custom" => s
            .segments
            .split(';')
            .filter(|x| !x.trim().is_empty())
            .map(SegmentSpec::parse)
            .collect::<Result<_>>()?,
        o => return Err(Error::Validation(format!("unknown synth layout '{o}' (acceptance, mini, custom)"))),
    };
    if segments.is_empty() {
        return Err(Error::Validation("synthetic layout has no segments".into()));
    }
    Ok(SynthConfig { segments, noise: s.noise, side: s.side, affect_jitter: s.jitter, event_interval_ms: s.interval_ms })
}

/// One event with decoded inputs.
#[derive(Debug, Clone)]
pub struct LoadedEvent {
    pub event: SessionEvent,
    pub visual: Option<VisualClip>,
    pub mfcc: Option<MfccMap>,
}

impl LoadedEvent {
    pub fn annotation(&self) -> Option<&Annotation> {
        self.event.annotation.as_ref()
    }

    pub fn batch(&self) -> Result<Batch> {
        Ok(Batch {
            visual: self.visual.as_ref().map(|v| visual_batch(&[v])).transpose()?,
            auditory: self.mfcc.as_ref().map(|m| auditory_batch(&[m])).transpose()?,
        })
    }
}

/// Reads a session and decodes every event's media (centered windows).
pub fn load_corpus(session: &Path) -> Result<Vec<LoadedEvent>> {
    let events = load_session(session)?;
    events
        .into_iter()
        .map(|event| {
            let media = load_media(session, &event, WindowChoice::Center)?;
            Ok(LoadedEvent { visual: media.visual, mfcc: media.audio.as_ref().map(mfcc_extract), event })
        })
        .collect()
}

/// Joint representation of one event.
pub fn represent(model: &Cccnn, e: &LoadedEvent) -> Result<Vec<f64>> {
    let mut r = model.represent(&e.batch()?)?;
    Ok(r.remove(0).features)
}

pub fn represent_all(model: &Cccnn, events: &[&LoadedEvent]) -> Result<Vec<Vec<f64>>> {
    events.iter().map(|e| represent(model, e)).collect()
}

use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::affect::Annotation;
use crate::error::{Error, Result};
use crate::frontend::synth::SyntheticEvent;
use crate::frontend::visual::{assemble_visual_clip, VisualClip, WindowChoice};
use crate::frontend::AudioClip;
use crate::tensor::Tensor;

/// Raw 16-bit little-endian PCM side file and its sample rate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AudioRef {
    pub path: String,
    pub rate: u32,
}

/// One timestamped interaction sample, one line of a session file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionEvent {
    pub t_ms: u64,
    pub subject: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<String>,
    /// Frame blob (`9*S*S` bytes) or a directory of grayscale images,
    /// relative to the session file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visual: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio: Option<AudioRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation: Option<Annotation>,
}

impl SessionEvent {
    pub fn validate(&self) -> Result<()> {
        if self.visual.is_none() && self.audio.is_none() {
            return Err(Error::Validation("event has neither visual nor audio".into()));
        }
        if self.subject.is_empty() {
            return Err(Error::Validation("subject must be non-empty".into()));
        }
        if let Some(a) = &self.annotation {
            a.validate()?;
        }
        Ok(())
    }
}

/// Reads and validates a JSON-lines session. Blank lines are skipped.
pub fn load_session(path: &Path) -> Result<Vec<SessionEvent>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut events = Vec::new();
    let mut last: Option<(u64, usize)> = None;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let ev: SessionEvent = serde_json::from_str(&line)
            .map_err(|e| Error::Validation(format!("{}:{line_no}: {e}", path.display())))?;
        ev.validate()
            .map_err(|e| Error::Validation(format!("{}:{line_no}: {e}", path.display())))?;
        if let Some((t, prev_line)) = last {
            if ev.t_ms < t {
                return Err(Error::Validation(format!(
                    "{}: t_ms goes backwards: line {prev_line} has {t}, line {line_no} has {}",
                    path.display(),
                    ev.t_ms
                )));
            }
        }
        last = Some((ev.t_ms, line_no));
        events.push(ev);
    }
    Ok(events)
}

pub fn write_session_lines(path: &Path, events: &[SessionEvent]) -> Result<()> {
    let mut out = Vec::new();
    for ev in events {
        serde_json::to_writer(&mut out, ev)?;
        out.push(b'\n');
    }
    write_file(path, &out)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// Writes a generated stream: the JSONL file plus side-filed blobs at the
/// relative paths named in each event.
pub fn save_synthetic(path: &Path, events: &[SyntheticEvent]) -> Result<()> {
    let base = base_dir(path);
    for e in events {
        if let Some(v) = &e.event.visual {
            write_file(&base.join(v), &e.visual.to_bytes())?;
        }
        if let Some(a) = &e.event.audio {
            write_file(&base.join(&a.path), &e.audio.to_pcm16())?;
        }
    }
    let lines: Vec<SessionEvent> = events.iter().map(|e| e.event.clone()).collect();
    write_session_lines(path, &lines)
}

fn base_dir(session: &Path) -> PathBuf {
    session.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Decoded media of one event.
#[derive(Debug, Clone)]
pub struct EventMedia {
    pub visual: Option<VisualClip>,
    pub audio: Option<AudioClip>,
}

/// Loads the media referenced by `event`, resolving paths against the
/// directory holding the session file.
pub fn load_media(session: &Path, event: &SessionEvent, window: WindowChoice) -> Result<EventMedia> {
    let base = base_dir(session);
    let visual = match &event.visual {
        Some(rel) => Some(load_visual(&base.join(rel), window)?),
        None => None,
    };
    let audio = match &event.audio {
        Some(a) => {
            let p = base.join(&a.path);
            let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
            Some(AudioClip::from_pcm16_bytes(&bytes, a.rate)?)
        }
        None => None,
    };
    Ok(EventMedia { visual, audio })
}

/// Reads a frame blob, or every image in a directory (sorted by file name).
/// Image directories may hold any number of frames of at least nine; the
/// 9-frame window is cut according to `window`.
pub fn load_visual(path: &Path, window: WindowChoice) -> Result<VisualClip> {
    if path.is_dir() {
        let mut names: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        names.sort();
        let mut frames = Vec::with_capacity(names.len());
        for p in &names {
            let img = image::open(p)
                .map_err(|e| Error::Format(format!("{}: {e}", p.display())))?
                .into_luma8();
            let (w, h) = img.dimensions();
            if w != h {
                return Err(Error::Validation(format!("{}: frame is {w}x{h}, expected square", p.display())));
            }
            let data = img.into_raw().into_iter().map(|b| b as f64 / 255.0).collect();
            frames.push(Tensor::new(&[h as usize, w as usize], data)?);
        }
        if let Some(first) = frames.first() {
            if frames.iter().any(|f| f.shape() != first.shape()) {
                return Err(Error::Validation(format!("{}: frames differ in size", path.display())));
            }
        }
        assemble_visual_clip(&frames, window)
    } else {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let side = VisualClip::side_for_blob(bytes.len()).ok_or_else(|| {
            Error::Validation(format!(
                "{}: {} bytes is not 9 square frames",
                path.display(),
                bytes.len()
            ))
        })?;
        VisualClip::from_bytes(&bytes, side)
    }
}

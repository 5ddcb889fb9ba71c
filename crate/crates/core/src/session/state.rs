//! Versioned JSON container for everything a trained pipeline needs.

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::appraisal::{AppraisalHeads, MemoryRegistry, MoodState};
use crate::cccnn::Cccnn;
use crate::error::{Error, Result};
use crate::gwr::GwrNetwork;

pub const FORMAT_VERSION: u32 = 1;
const FILE_PREFIX: &str = "file:";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelState {
    pub format_version: u32,
    /// Channel specs and every CCCNN parameter.
    pub model: Option<Cccnn>,
    pub perception: Option<GwrNetwork>,
    pub heads: Option<AppraisalHeads>,
    pub memories: MemoryRegistry,
    pub mood: MoodState,
    /// Canonical `section.key = value` settings in force when the state was written.
    pub hyperparameters: BTreeMap<String, String>,
    /// Seed used by each stage that produced part of the state.
    pub seeds: BTreeMap<String, u64>,
}

impl ModelState {
    pub fn new(mood: MoodState) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            model: None,
            perception: None,
            heads: None,
            memories: MemoryRegistry::default(),
            mood,
            hyperparameters: BTreeMap::new(),
            seeds: BTreeMap::new(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text)?;
        Self::from_value(v)
    }

    fn from_value(v: Value) -> Result<Self> {
        check_version(&v)?;
        Ok(serde_json::from_value(v)?)
    }
}

fn check_version(v: &Value) -> Result<()> {
    let found = v
        .get("format_version")
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::Format("state file has no format_version".into()))?;
    if found != FORMAT_VERSION as u64 {
        return Err(Error::Version { found: found as u32, expected: FORMAT_VERSION });
    }
    Ok(())
}

/// Where parameter blobs go when saving.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlobMode {
    /// Inline base64 strings.
    Embedded,
    /// Raw files in `<state>.blobs/`, referenced as `file:<name>`.
    SideFiled,
}

fn blob_dir(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".blobs");
    path.with_file_name(name)
}

/// Visits every parameter blob string (the `blobs` arrays of parameter stores).
fn visit_blobs(v: &mut Value, f: &mut dyn FnMut(&mut String) -> Result<()>) -> Result<()> {
    match v {
        Value::Object(map) => {
            let is_store = map.contains_key("names");
            for (k, child) in map.iter_mut() {
                if is_store && k == "blobs" {
                    if let Value::Array(items) = child {
                        for item in items {
                            if let Value::String(s) = item {
                                f(s)?;
                            }
                        }
                    }
                } else {
                    visit_blobs(child, f)?;
                }
            }
        }
        Value::Array(items) => {
            for item in items {
                visit_blobs(item, f)?;
            }
        }
        _ => {}
    }
    Ok(())
}

pub fn save_state(state: &ModelState, path: &Path, mode: BlobMode) -> Result<()> {
    let text = match mode {
        BlobMode::Embedded => state.to_json()?,
        BlobMode::SideFiled => {
            let dir = blob_dir(path);
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            let dir_name = dir.file_name().expect("derived from a file name").to_string_lossy().into_owned();
            let mut v = serde_json::to_value(state)?;
            let mut n = 0usize;
            visit_blobs(&mut v, &mut |s| {
                let bytes = BASE64.decode(s.as_bytes()).map_err(|e| Error::Format(e.to_string()))?;
                let name = format!("{n:05}.bin");
                let file = dir.join(&name);
                std::fs::write(&file, bytes).map_err(|e| Error::io(&file, e))?;
                *s = format!("{FILE_PREFIX}{dir_name}/{name}");
                n += 1;
                Ok(())
            })?;
            let mut s = serde_json::to_string_pretty(&v)?;
            s.push('\n');
            s
        }
    };
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads a state written by [`save_state`] in either blob mode.
pub fn load_state(path: &Path) -> Result<ModelState> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut v: Value = serde_json::from_str(&text)?;
    check_version(&v)?;
    let base = path.parent().unwrap_or(Path::new("."));
    visit_blobs(&mut v, &mut |s| {
        if let Some(rel) = s.strip_prefix(FILE_PREFIX) {
            let file = base.join(rel);
            let bytes = std::fs::read(&file).map_err(|e| Error::io(&file, e))?;
            *s = BASE64.encode(bytes);
        }
        Ok(())
    })?;
    ModelState::from_value(v)
}

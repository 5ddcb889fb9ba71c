//! A small end-to-end fixture: a short synthetic session and a state that
//! went through every training stage with a handful of epochs.

use emocircuit::frontend::synth_stream;
use emocircuit::pipeline::{
    fit_perception, fresh_state, load_corpus, synth_config, train_audio, train_cross, train_visual, LoadedEvent,
    Settings, SCHEMA,
};
use emocircuit::session::{save_synthetic, Config, ModelState};
use std::path::{Path, PathBuf};

/// Overrides for a fast run on the two-subject layout.
pub const QUICK: &[&str] = &[
    "synth.layout=mini",
    "synth.events_per_topic=7",
    "train_visual.epochs=2",
    "train_audio.epochs=2",
    "train_cross.epochs=2",
    "perception.epochs=2",
    "heads.epochs=20",
];

pub fn settings(overrides: &[&str]) -> Settings {
    let mut cfg = Config::default();
    for o in overrides {
        cfg.set_override(o, SCHEMA).unwrap();
    }
    Settings::from_config(&cfg).unwrap()
}

pub fn write_session(dir: &Path, s: &Settings, seed: u64) -> PathBuf {
    let path = dir.join("session.jsonl");
    save_synthetic(&path, &synth_stream(&synth_config(&s.synth).unwrap(), seed).unwrap()).unwrap();
    path
}

pub fn trained_state(data: &[LoadedEvent], s: &Settings, seed: u64) -> ModelState {
    let mut st = fresh_state(s).unwrap();
    train_visual(&mut st, data, s, seed).unwrap();
    train_audio(&mut st, data, s, seed).unwrap();
    train_cross(&mut st, data, s, seed).unwrap();
    fit_perception(&mut st, data, s, seed).unwrap();
    st
}

/// Session, decoded corpus and trained state under `dir`.
pub fn quick_pipeline(dir: &Path, s: &Settings) -> (PathBuf, Vec<LoadedEvent>, ModelState) {
    let session = write_session(dir, s, 7);
    let data = load_corpus(&session).unwrap();
    let st = trained_state(&data, s, 11);
    (session, data, st)
}

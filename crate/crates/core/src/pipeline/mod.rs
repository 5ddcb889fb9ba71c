//! End-to-end stages shared by the command-line tool and the tests.

pub mod data;
pub mod gradcheck;
pub mod settings;
pub mod stages;

pub use data::{acceptance_segments, load_corpus, represent, synth_config, LoadedEvent};
pub use settings::{Settings, SynthSettings, SCHEMA};
pub use stages::{
    build_report, corpus_split, evaluate_heads, fit_perception, fresh_state, replay, train_audio, train_cross,
    train_visual, trajectory_ccc, PerceptRecord, ReplayOutput, StageReport, PERCEPTS_CSV_HEADER,
    PERCEPTS_FILE, TRAJECTORY_DIR,
};

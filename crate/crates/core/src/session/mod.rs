//! Session files, model-state persistence, configuration and run manifests.

pub mod config;
pub mod event;
pub mod manifest;
pub mod state;

pub use config::Config;
pub use event::{load_media, load_session, save_synthetic, write_session_lines, AudioRef, EventMedia, SessionEvent};
pub use manifest::write_manifest;
pub use state::{load_state, save_state, BlobMode, ModelState, FORMAT_VERSION};

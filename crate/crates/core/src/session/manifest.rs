use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_sha256: String,
    seed: Option<u64>,
    crate_version: &'static str,
    state_format_version: u32,
    outputs: &'a [String],
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes `<command>.manifest.json` into `dir`, so runs sharing an output
/// directory keep separate manifests. Returns the path written.
pub fn write_manifest(
    dir: &Path,
    command: &str,
    canonical_config: &str,
    seed: Option<u64>,
    outputs: &[String],
) -> Result<std::path::PathBuf> {
    let m = Manifest {
        command,
        config_sha256: sha256_hex(canonical_config.as_bytes()),
        seed,
        crate_version: env!("CARGO_PKG_VERSION"),
        state_format_version: super::state::FORMAT_VERSION,
        outputs,
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(format!("{command}.manifest.json"));
    let mut text = serde_json::to_string_pretty(&m)?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

//! Output helpers: sidecar JSON with seed and checkpoint hash.

use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Serialize)]
pub struct Sidecar<'a, T: Serialize> {
    pub command: &'a str,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint_sha256: Option<String>,
    pub details: T,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_sidecar<T: Serialize>(
    path: &Path,
    command: &str,
    seed: u64,
    checkpoint: Option<&Path>,
    details: T,
) -> Result<(), CliError> {
    let sidecar = Sidecar {
        command,
        seed,
        checkpoint: checkpoint.map(|p| p.display().to_string()),
        checkpoint_sha256: checkpoint.map(sha256_file).transpose()?,
        details,
    };
    write_json(path, &sidecar)
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

//! Run manifests: enough to replay a command and check its inputs.

use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const TOOL: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputFile {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Arguments after the program name, as given.
    pub argv: Vec<String>,
    /// Working directory the arguments are relative to.
    pub cwd: PathBuf,
    pub inputs: Vec<InputFile>,
    /// Resolved settings, including defaults and seeds.
    pub config: serde_json::Value,
    pub started_at: String,
    pub finished_at: String,
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let mut f = std::fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

impl RunManifest {
    pub fn file_name(command: &str) -> String {
        format!("manifest.{command}.json")
    }

    /// Inputs whose current checksum differs from the recorded one, with
    /// the reason.
    pub fn changed_inputs(&self, base: &Path) -> Vec<(PathBuf, String)> {
        self.inputs
            .iter()
            .filter_map(|i| {
                let path = base.join(&i.path);
                match sha256_file(&path) {
                    Ok(h) if h == i.sha256 => None,
                    Ok(_) => Some((i.path.clone(), "checksum differs".to_string())),
                    Err(e) => Some((i.path.clone(), e.to_string())),
                }
            })
            .collect()
    }
}

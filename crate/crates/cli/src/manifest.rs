//! Run manifests: every command records what ran and what it produced.

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

/// Manifest emitted next to every command's artifacts.
///
/// `config_hash` covers the command name and all result-affecting flags
/// (worker count and output paths excluded), so identical config + seed
/// reproduce identical hash fields; `wall_clock_seconds` is the only field
/// expected to differ between reruns.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub version: String,
    pub command: String,
    pub config_hash: String,
    pub master_seed: Option<u64>,
    pub artifacts: Vec<String>,
    pub wall_clock_seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runtime_note: Option<String>,
}

impl RunManifest {
    pub fn new<C: Serialize>(
        command: &str,
        config: &C,
        master_seed: Option<u64>,
        artifacts: Vec<String>,
        wall_clock_seconds: f64,
        runtime_note: Option<String>,
    ) -> Self {
        let mut config = serde_json::to_value(config).expect("config serializes");
        if let Some(map) = config.as_object_mut() {
            map.remove("out"); // output location must not change the hash
        }
        let canonical = serde_json::to_string(&serde_json::json!({
            "command": command,
            "config": config,
        }))
        .expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        RunManifest {
            schema_version: SCHEMA_VERSION,
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_hash: hex::encode(hasher.finalize()),
            master_seed,
            artifacts,
            wall_clock_seconds,
            runtime_note,
        }
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(dir.join("manifest.json"), text)
    }
}

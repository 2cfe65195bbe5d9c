use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::output::canonical_json;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Timestamps {
    pub started: Option<u64>,
    pub finished: Option<u64>,
}

/// Provenance block embedded in every report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunManifest {
    /// SHA-256 of the canonical JSON of the fully resolved config.
    pub config_hash: String,
    pub seed: u64,
    pub tool_version: String,
    /// Taken from `SOURCE_DATE_EPOCH` when set, so reruns stay byte-identical.
    pub timestamps: Timestamps,
    pub outputs: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn source_date_epoch() -> Option<u64> {
    std::env::var("SOURCE_DATE_EPOCH").ok()?.trim().parse().ok()
}

impl RunManifest {
    pub fn new(config: &Value, seed: u64, outputs: Vec<String>) -> Self {
        let epoch = source_date_epoch();
        Self {
            config_hash: sha256_hex(canonical_json(config).as_bytes()),
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamps: Timestamps {
                started: epoch,
                finished: epoch,
            },
            outputs,
        }
    }
}

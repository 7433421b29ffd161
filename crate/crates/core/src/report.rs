//! JSON reports for randomized runs.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const TOOL: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Envelope for every JSON artifact. No timestamps, so identical inputs give
/// identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// SHA-256 of the compact JSON encoding of `config`.
    pub config_hash: String,
    pub master_seed: Option<u64>,
    pub config: Value,
    pub result: Value,
}

impl Report {
    pub fn new<C: Serialize, R: Serialize>(
        command: &str,
        master_seed: Option<u64>,
        config: &C,
        result: &R,
    ) -> serde_json::Result<Self> {
        let config = serde_json::to_value(config)?;
        Ok(Self {
            tool: TOOL.to_owned(),
            version: VERSION.to_owned(),
            command: command.to_owned(),
            config_hash: config_hash(&config),
            master_seed,
            config,
            result: serde_json::to_value(result)?,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

pub fn config_hash(config: &Value) -> String {
    let digest = Sha256::digest(config.to_string().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

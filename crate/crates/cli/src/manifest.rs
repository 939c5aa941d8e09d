use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Everything needed to regenerate a command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: Value,
    pub dataset_sha256: String,
    pub seeds: Vec<u64>,
}

impl RunManifest {
    pub fn new(command: &str, config: Value, dataset_sha256: String, seeds: Vec<u64>) -> Self {
        Self {
            tool: "supclust".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config,
            dataset_sha256,
            seeds,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

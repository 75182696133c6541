//! Provenance record embedded in every output file.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputHash {
    /// Path as given on the command line.
    pub path: String,
    pub sha256: String,
}

/// Everything needed to reproduce a run: rerunning `command` with `config`
/// on inputs with these hashes gives byte-identical outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub inputs: Vec<InputHash>,
    pub seed: Option<u64>,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, seed: Option<u64>) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config,
            inputs: Vec::new(),
            seed,
        }
    }

    pub fn with_input(mut self, path: &Path, bytes: &[u8]) -> Self {
        self.inputs.push(InputHash { path: path.display().to_string(), sha256: sha256_hex(bytes) });
        self
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// `{"manifest": ..., <key>: payload}` rendered as pretty JSON with a trailing newline.
pub fn document<T: Serialize>(manifest: &RunManifest, key: &str, payload: &T) -> String {
    let mut map = serde_json::Map::new();
    map.insert("manifest".into(), serde_json::to_value(manifest).expect("manifest serializes"));
    map.insert(key.into(), serde_json::to_value(payload).expect("payload serializes"));
    let mut s = serde_json::to_string_pretty(&serde_json::Value::Object(map)).expect("document serializes");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_known_input() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn documents_are_stable() {
        let m =
            RunManifest::new("fit", serde_json::json!({"p": 2.0}), Some(1)).with_input(Path::new("a.csv"), b"0,0\n");
        let a = document(&m, "result", &[1.0, 2.5]);
        assert_eq!(a, document(&m, "result", &[1.0, 2.5]));
        let v: serde_json::Value = serde_json::from_str(&a).unwrap();
        assert_eq!(v["manifest"]["command"], "fit");
        assert_eq!(v["result"][1], 2.5);
        assert_eq!(v["manifest"]["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
    }
}

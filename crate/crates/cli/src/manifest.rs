//! Run manifests: the resolved configuration, input digests, and timing of
//! every invocation. Rerunning with `--config <manifest>` reproduces the
//! outputs bit-exactly; the manifest itself is the only output carrying
//! wall-clock data.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::errors::{CliError, CliResult};
use crate::outputs::write_atomic;

#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub resolved: serde_json::Map<String, serde_json::Value>,
    pub input_digests: BTreeMap<String, String>,
    pub threads: usize,
    pub started_unix_ms: u128,
    pub elapsed_ms: u128,
}

pub struct ManifestBuilder {
    subcommand: String,
    inputs: BTreeMap<String, String>,
    start: Instant,
    started_unix_ms: u128,
}

impl ManifestBuilder {
    pub fn new(subcommand: &str) -> Self {
        ManifestBuilder {
            subcommand: subcommand.to_string(),
            inputs: BTreeMap::new(),
            start: Instant::now(),
            started_unix_ms: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis())
                .unwrap_or(0),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> CliResult<()> {
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
        let digest = Sha256::digest(&bytes);
        self.inputs.insert(
            path.display().to_string(),
            format!("sha256:{}", hex_string(&digest)),
        );
        Ok(())
    }

    pub fn finish(
        self,
        resolved: serde_json::Map<String, serde_json::Value>,
        threads: usize,
    ) -> RunManifest {
        RunManifest {
            tool: "causal-cpd".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            subcommand: self.subcommand,
            resolved,
            input_digests: self.inputs,
            threads,
            started_unix_ms: self.started_unix_ms,
            elapsed_ms: self.start.elapsed().as_millis(),
        }
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_manifest(path: &Path, manifest: &RunManifest) -> CliResult<()> {
    let text = serde_json::to_string_pretty(manifest)
        .map_err(|e| CliError::Internal(e.to_string()))?;
    write_atomic(path, text.as_bytes())
}

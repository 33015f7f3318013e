use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineStage;
use crate::io::IoError;

pub const MANIFEST_FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    /// Relative to the outputs directory for stage outputs; as configured
    /// for external inputs.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl FileDigest {
    pub fn of(file: &Path, label: impl Into<String>) -> Result<Self, IoError> {
        let data = std::fs::read(file).map_err(|source| IoError::Io {
            path: file.to_path_buf(),
            source,
        })?;
        Ok(Self {
            path: label.into(),
            sha256: format!("{:x}", Sha256::digest(&data)),
            bytes: data.len() as u64,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: PipelineStage,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: u32,
    pub config_hash: String,
    pub seed: u64,
    pub versions: BTreeMap<String, String>,
    /// Most recent record per stage, in pipeline order.
    pub stages: Vec<StageRecord>,
}

impl RunManifest {
    pub fn new(config_hash: String, seed: u64) -> Self {
        let versions = [("afa-core".to_string(), env!("CARGO_PKG_VERSION").to_string())].into();
        Self {
            format: MANIFEST_FORMAT,
            config_hash,
            seed,
            versions,
            stages: Vec::new(),
        }
    }

    pub fn record(&mut self, rec: StageRecord) {
        self.stages.retain(|s| s.stage != rec.stage);
        self.stages.push(rec);
        self.stages.sort_by_key(|s| s.stage);
    }

    pub fn stage(&self, stage: PipelineStage) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.stage == stage)
    }

    /// `stage/path -> sha256` over every recorded output.
    pub fn content_hashes(&self) -> BTreeMap<String, String> {
        self.stages
            .iter()
            .flat_map(|s| s.outputs.iter().map(move |o| (format!("{}/{}", s.stage, o.path), o.sha256.clone())))
            .collect()
    }

    /// One hash over the config hash and every output hash; timings and
    /// versions are left out.
    pub fn content_digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.config_hash.as_bytes());
        for (k, v) in self.content_hashes() {
            h.update(b"\n");
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
        }
        format!("{:x}", h.finalize())
    }
}

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::ids::digest_hex;
use crate::jsonl;
use crate::types::SamplingConfig;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const ARTIFACT_VERSION: &str = concat!("prs-core/", env!("CARGO_PKG_VERSION"));

/// Everything needed to reproduce a run. With the mock backend the manifest
/// fully determines the output trees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: SamplingConfig,
    pub generator: Value,
    pub reward: Value,
    pub template_digest: String,
    pub prompt_digest: String,
    pub seed: u64,
    pub artifact_version: String,
    /// Seconds since the Unix epoch. Excluded from [`RunManifest::digest`].
    pub created_at: u64,
}

impl RunManifest {
    pub fn new(
        command: &str,
        config: SamplingConfig,
        generator: Value,
        reward: Value,
        template_digest: String,
        prompt_bytes: &[u8],
    ) -> Self {
        let created_at = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            command: command.to_string(),
            seed: config.seed,
            config,
            generator,
            reward,
            template_digest,
            prompt_digest: digest_hex(prompt_bytes),
            artifact_version: ARTIFACT_VERSION.to_string(),
            created_at,
        }
    }

    /// Content hash of every field except `created_at`.
    pub fn digest(&self) -> String {
        let mut v = serde_json::to_value(self).expect("manifest serializes");
        if let Some(m) = v.as_object_mut() {
            m.remove("created_at");
        }
        digest_hex(v.to_string().as_bytes())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        jsonl::write_atomic(&dir.join(MANIFEST_FILE), text.as_bytes())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let p = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: p.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        })
    }

    /// Manifest next to a tree file, if one exists.
    pub fn beside(trees: &Path) -> Result<Option<Self>> {
        let dir = trees.parent().unwrap_or(Path::new("."));
        if dir.join(MANIFEST_FILE).exists() {
            Self::read(dir).map(Some)
        } else {
            Ok(None)
        }
    }
}

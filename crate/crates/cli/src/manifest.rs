use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::jobs::Job;

pub const MANIFEST_SUFFIX: &str = ".manifest.json";

/// Record written next to every set of result files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    /// Fully resolved job; replaying it regenerates the outputs.
    pub job: Job,
    /// File name stem of the outputs.
    pub prefix: String,
    pub seed: Option<u64>,
    pub started_at: String,
    pub finished_at: String,
    /// `RAYON_NUM_THREADS` at run time. Results do not depend on it.
    pub threads: Option<String>,
    /// Output file names, relative to the manifest's directory.
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(job: Job, prefix: String, started_at: String, outputs: Vec<String>) -> Self {
        Self {
            prefix,
            tool: "zxqos".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed: job.seed(),
            job,
            started_at,
            finished_at: now(),
            threads: std::env::var("RAYON_NUM_THREADS").ok(),
            outputs,
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }

    pub fn path(dir: &Path, prefix: &str) -> PathBuf {
        dir.join(format!("{prefix}{MANIFEST_SUFFIX}"))
    }
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

//! Run manifests: the resolved configuration, per-output SHA-256 digests and
//! the verdict of every check, written atomically after all outputs.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Version of the manifest layout.
pub const SCHEMA: &str = "atfbm-manifest/1";
pub const FILE_NAME: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

/// One acceptance check invoked by a command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub verdict: Verdict,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), verdict: if pass { Verdict::Pass } else { Verdict::Fail }, detail: detail.into() }
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputDigest {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub tool_version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub workers: usize,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<OutputDigest>,
    pub checks: Vec<Check>,
    pub error: Option<String>,
    pub exit_code: i32,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Write `bytes` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> io::Result<()> {
        let json = serde_json::to_vec_pretty(self).map_err(io::Error::other)?;
        write_atomic(&dir.join(FILE_NAME), &json)
    }

    pub fn read(dir: &Path) -> io::Result<Self> {
        let text = fs::read(dir.join(FILE_NAME))?;
        serde_json::from_slice(&text).map_err(io::Error::other)
    }

    /// Files whose current digest differs from the recorded one (or are missing).
    pub fn mismatches(&self, dir: &Path) -> Vec<String> {
        self.outputs
            .iter()
            .filter(|o| fs::read(dir.join(&o.file)).map(|b| sha256_hex(&b) != o.sha256).unwrap_or(true))
            .map(|o| o.file.clone())
            .collect()
    }

    pub fn all_passed(&self) -> bool {
        self.error.is_none() && self.checks.iter().all(Check::passed)
    }
}

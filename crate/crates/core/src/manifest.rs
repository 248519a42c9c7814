//! Run manifest: provenance of one CLI run, written atomically at the end.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fl::RoundDiagnostics;
use crate::seed;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 of the config file bytes, if the run read one.
    pub config_digest: Option<String>,
    /// Config after defaults and command-line overrides.
    pub resolved_config: Option<serde_json::Value>,
    pub master_seed: u64,
    pub seeds: BTreeMap<String, u64>,
    pub started_at: u64,
    pub finished_at: Option<u64>,
    pub version: String,
    pub parallel: bool,
    pub threads: Option<usize>,
    pub rounds: Vec<RoundDiagnostics>,
    pub outputs: Vec<String>,
    pub partial: bool,
    pub error: Option<String>,
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

impl RunManifest {
    pub fn start(command: &str, master_seed: u64) -> Self {
        let mut m = RunManifest {
            command: command.to_string(),
            config_digest: None,
            resolved_config: None,
            master_seed,
            seeds: BTreeMap::new(),
            started_at: unix_now(),
            finished_at: None,
            version: env!("CARGO_PKG_VERSION").to_string(),
            parallel: crate::par::is_parallel(),
            threads: None,
            rounds: Vec::new(),
            outputs: Vec::new(),
            partial: false,
            error: None,
        };
        m.set_seed(master_seed);
        m
    }

    /// Records the master seed and the sub-stream seeds derived from it.
    pub fn set_seed(&mut self, master_seed: u64) {
        self.master_seed = master_seed;
        self.seeds = seed::ALL_STREAMS.iter().map(|name| (name.to_string(), seed::stream(master_seed, name))).collect();
    }

    /// Stamps the end time and writes `manifest.json` via a temp file and rename.
    pub fn finish(&mut self, dir: &Path) -> Result<()> {
        self.finished_at = Some(unix_now());
        std::fs::create_dir_all(dir)?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        serde_json::to_writer_pretty(&mut tmp, self)?;
        tmp.write_all(b"\n")?;
        tmp.persist(dir.join(MANIFEST_FILE)).map_err(|e| e.error)?;
        Ok(())
    }
}

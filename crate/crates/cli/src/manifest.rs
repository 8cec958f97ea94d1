use std::path::Path;

use anyhow::Result;
use serde::{Deserialize, Serialize};

use crate::config::Config;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Record of one command run. Feeding it back through `--config` repeats the
/// run; only `duration_s` differs between repeats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    /// Worker cap; 0 means one worker per core.
    pub threads: usize,
    pub config: Config,
    /// File names relative to the output directory.
    pub outputs: Vec<String>,
    pub duration_s: f64,
}

impl Manifest {
    pub fn write(&self, out_dir: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        ambsim::output::write_atomic(&out_dir.join(MANIFEST_FILE), format!("{json}\n").as_bytes())?;
        Ok(())
    }
}

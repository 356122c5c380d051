//! Run records: the metrics, flags, and manifest a run leaves behind.
//! Metrics are deterministic functions of config + seed (worker count held
//! fixed), so re-runs reproduce them bit for bit; the timestamp is
//! bookkeeping, not a metric.

use serde::Serialize;
use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Debug, Clone, Serialize)]
pub struct ResultRecord {
    /// Experiment kind plus a config-hash prefix.
    pub id: String,
    pub kind: String,
    pub unix_time_s: u64,
    /// Hash of the resolved config text (non-cryptographic, for provenance).
    pub config_hash: String,
    pub workers: usize,
    pub seed: u64,
    pub metrics: BTreeMap<String, f64>,
    pub flags: BTreeMap<String, bool>,
    /// Named hypothesis violations; non-empty forces exit code 2.
    pub violations: Vec<String>,
    pub files: Vec<String>,
}

impl ResultRecord {
    pub fn new(kind: &str, config_hash: String, workers: usize, seed: u64) -> Self {
        let unix_time_s =
            SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let id = format!("{kind}-{}", &config_hash[..config_hash.len().min(8)]);
        ResultRecord {
            id,
            kind: kind.to_string(),
            unix_time_s,
            config_hash,
            workers,
            seed,
            metrics: BTreeMap::new(),
            flags: BTreeMap::new(),
            violations: Vec::new(),
            files: Vec::new(),
        }
    }

    pub fn metric(&mut self, key: &str, value: f64) {
        self.metrics.insert(key.to_string(), value);
    }

    pub fn flag(&mut self, key: &str, value: bool) {
        self.flags.insert(key.to_string(), value);
    }

    pub fn violation(&mut self, text: impl Into<String>) {
        self.violations.push(text.into());
    }

    pub fn file(&mut self, name: &str) {
        self.files.push(name.to_string());
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty() && self.flags.values().all(|v| *v)
    }

    /// 0 all checks pass; 2 hypothesis violations reported; 1 plain failures.
    pub fn exit_code(&self) -> i32 {
        if !self.violations.is_empty() {
            2
        } else if self.passed() {
            0
        } else {
            1
        }
    }

    pub fn write_summary(&mut self, out_dir: &Path) -> Result<(), crate::ErgoError> {
        if !self.files.iter().any(|f| f == "summary.json") {
            self.files.push("summary.json".into());
        }
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| crate::ErgoError::Artifact(e.to_string()))?;
        std::fs::write(out_dir.join("summary.json"), text)?;
        Ok(())
    }
}

/// FNV-1a over the resolved config text: stable across runs and platforms,
/// good enough to key artifacts to the config that produced them.
pub fn config_hash(text: &str) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

//! Experiment reports: metrics keyed by (task, dimension, precision).

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One metric observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub task: String,
    pub dim: usize,
    /// "full" or "binary".
    pub precision: String,
    pub metric: String,
    pub value: f64,
    /// Training step the measurement belongs to, when curve-shaped.
    #[serde(default)]
    pub step: Option<u64>,
    /// Free-form cell label (loss configuration, regime, setting).
    #[serde(default)]
    pub label: Option<String>,
}

/// A single experiment's machine-readable output.
///
/// Wallclock is kept for the stdout summary but skipped during
/// serialization so that same-seed reruns produce byte-identical files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub config_hash: String,
    pub seed: u64,
    pub rows: Vec<MetricRow>,
    #[serde(skip)]
    pub wallclock_secs: f64,
}

impl ExperimentReport {
    pub fn new(experiment: &str, config_hash: String, seed: u64) -> Self {
        ExperimentReport {
            experiment: experiment.to_string(),
            config_hash,
            seed,
            rows: Vec::new(),
            wallclock_secs: 0.0,
        }
    }

    pub fn push(&mut self, row: MetricRow) {
        self.rows.push(row);
    }

    pub fn write_json(&self, path: &std::path::Path) -> Result<()> {
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut out = String::from("experiment,seed,task,dim,precision,metric,value,step,label\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                self.experiment,
                self.seed,
                r.task,
                r.dim,
                r.precision,
                r.metric,
                format_value(r.value),
                r.step.map(|s| s.to_string()).unwrap_or_default(),
                r.label.clone().unwrap_or_default(),
            ));
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Fixed-precision rendering so report files are reproducible.
pub fn format_value(v: f64) -> String {
    format!("{:.6}", v)
}

/// FNV-1a hash of a canonical JSON rendering; the experiment's config
/// fingerprint.
pub fn config_hash<T: Serialize>(cfg: &T) -> Result<String> {
    let json = serde_json::to_string(cfg)?;
    let mut h = 0xcbf29ce484222325u64;
    for b in json.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    Ok(format!("{:016x}", h))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_files_omit_wallclock() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        let mut r = ExperimentReport::new("demo", "abc".into(), 7);
        r.wallclock_secs = 123.456;
        r.push(MetricRow {
            task: "retrieval".into(),
            dim: 32,
            precision: "full".into(),
            metric: "ndcg@10".into(),
            value: 0.5,
            step: None,
            label: None,
        });
        r.write_json(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(!text.contains("wallclock"));
    }

    #[test]
    fn config_hash_is_stable_and_sensitive() {
        #[derive(Serialize)]
        struct C {
            a: u32,
        }
        let h1 = config_hash(&C { a: 1 }).unwrap();
        let h2 = config_hash(&C { a: 1 }).unwrap();
        let h3 = config_hash(&C { a: 2 }).unwrap();
        assert_eq!(h1, h2);
        assert_ne!(h1, h3);
    }
}

//! Line-delimited JSON dataset records, one schema per task family.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};

/// {q, d}
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub q: String,
    pub d: String,
}

/// {q, d_pos, d_negs[]}
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripletRecord {
    pub q: String,
    pub d_pos: String,
    pub d_negs: Vec<String>,
    /// Generator-side latent topic; not consumed by training.
    #[serde(default)]
    pub topic: u32,
}

/// {a, b, score}
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRecord {
    pub a: String,
    pub b: String,
    pub score: f64,
}

/// {anchor, positive, negatives[7], label}
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRecord {
    pub anchor: String,
    pub positive: String,
    pub negatives: Vec<String>,
    pub label: u32,
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut f, r)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in f.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("{}:{}: {}", path.display(), i + 1, e)))?;
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.jsonl");
        let records = vec![
            PairRecord { q: "w004 w005".into(), d: "w006".into() },
            PairRecord { q: "w007".into(), d: "w008 w009".into() },
        ];
        write_jsonl(&path, &records).unwrap();
        let back: Vec<PairRecord> = read_jsonl(&path).unwrap();
        assert_eq!(back, records);
    }

    #[test]
    fn malformed_line_reports_location() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "{\"q\": \"a\", \"d\": \"b\"}\nnot json\n").unwrap();
        let err = read_jsonl::<PairRecord>(&path).unwrap_err();
        assert!(err.to_string().contains(":2:"));
    }
}

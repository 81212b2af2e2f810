//! Versioned binary checkpoint file.
//!
//! Layout: magic "EMLB", format version (u32 LE), a JSON metadata block,
//! then parameter blobs as little-endian 32-bit floats with a per-tensor
//! name and shape header.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::config::{AdapterConfig, EncoderConfig, ProjectionSide};
use crate::model::params::Tensor;

pub const MAGIC: &[u8; 4] = b"EMLB";
pub const FORMAT_VERSION: u32 = 1;

/// Serialized ChaCha8 state; restoring it resumes the stream exactly.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos_lo: u64,
    pub word_pos_hi: u64,
}

/// Per-dataset sampling position (epoch + offset into the epoch's
/// deterministic shuffle).
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize, PartialEq, Eq)]
pub struct DatasetCursor {
    pub epoch: u64,
    pub offset: u64,
}

/// Everything about a run that is not a tensor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub encoder: EncoderConfig,
    pub adapter: AdapterConfig,
    pub projection_side: ProjectionSide,
    pub step: u64,
    pub log_tau: f32,
    pub teacher_seed: u64,
    #[serde(default)]
    pub stage: Option<String>,
    #[serde(default)]
    pub rng: Option<RngState>,
    #[serde(default)]
    pub dataset_cursors: Vec<DatasetCursor>,
}

pub fn write_checkpoint(
    path: &Path,
    meta: &CheckpointMeta,
    tensors: &[(String, &Tensor)],
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    let meta_json = serde_json::to_vec(meta)?;
    w.write_all(&(meta_json.len() as u32).to_le_bytes())?;
    w.write_all(&meta_json)?;
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (name, t) in tensors {
        let name_bytes = name.as_bytes();
        if name_bytes.len() > u16::MAX as usize {
            return Err(Error::Format(format!("tensor name too long: {}", name)));
        }
        w.write_all(&(name_bytes.len() as u16).to_le_bytes())?;
        w.write_all(name_bytes)?;
        w.write_all(&(t.rows as u32).to_le_bytes())?;
        w.write_all(&(t.cols as u32).to_le_bytes())?;
        for v in &t.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<(CheckpointMeta, Vec<(String, Tensor)>)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "bad checkpoint magic {:02x?}, expected {:02x?}",
            magic, MAGIC
        )));
    }
    let version = read_u32(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {} (expected {})",
            version, FORMAT_VERSION
        )));
    }
    let meta_len = read_u32(&mut r)? as usize;
    let mut meta_buf = vec![0u8; meta_len];
    read_exact(&mut r, &mut meta_buf)?;
    let meta: CheckpointMeta = serde_json::from_slice(&meta_buf)?;

    let count = read_u32(&mut r)? as usize;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = read_u16(&mut r)? as usize;
        let mut name_buf = vec![0u8; name_len];
        read_exact(&mut r, &mut name_buf)?;
        let name = String::from_utf8(name_buf)
            .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
        let rows = read_u32(&mut r)? as usize;
        let cols = read_u32(&mut r)? as usize;
        let mut data = vec![0f32; rows * cols];
        for v in data.iter_mut() {
            let mut b = [0u8; 4];
            read_exact(&mut r, &mut b)?;
            *v = f32::from_le_bytes(b);
        }
        tensors.push((name, Tensor { rows, cols, data }));
    }
    Ok((meta, tensors))
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|e| Error::Format(format!("truncated checkpoint: {}", e)))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u16<R: Read>(r: &mut R) -> Result<u16> {
    let mut b = [0u8; 2];
    read_exact(r, &mut b)?;
    Ok(u16::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> CheckpointMeta {
        CheckpointMeta {
            format_version: FORMAT_VERSION,
            encoder: EncoderConfig::default(),
            adapter: AdapterConfig::default(),
            projection_side: ProjectionSide::StudentSide,
            step: 17,
            log_tau: -3.912,
            teacher_seed: 99,
            stage: Some("distill".into()),
            rng: Some(RngState { seed: [7u8; 32], stream: 2, word_pos_lo: 123, word_pos_hi: 0 }),
            dataset_cursors: vec![DatasetCursor { epoch: 1, offset: 5 }],
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.bin");
        let t = Tensor { rows: 2, cols: 3, data: vec![1.0, -2.5, 3.25, 0.0, f32::MIN_POSITIVE, 7.0] };
        write_checkpoint(&path, &meta(), &[("enc.embed".into(), &t)]).unwrap();
        let (m2, tensors) = read_checkpoint(&path).unwrap();
        assert_eq!(m2.step, 17);
        assert_eq!(tensors.len(), 1);
        assert_eq!(tensors[0].0, "enc.embed");
        assert_eq!(tensors[0].1, t);
    }

    #[test]
    fn corrupted_magic_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.bin");
        std::fs::write(&path, b"NOPE rest of file").unwrap();
        assert!(matches!(read_checkpoint(&path), Err(Error::Format(_))));
    }

    #[test]
    fn truncated_file_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.bin");
        let t = Tensor::zeros(4, 4);
        write_checkpoint(&path, &meta(), &[("enc.embed".into(), &t)]).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 7]).unwrap();
        assert!(matches!(read_checkpoint(&path), Err(Error::Format(_))));
    }
}

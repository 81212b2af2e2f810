//! Embedding store file.
//!
//! Layout: magic "EMST", version u32, count u64, dim u32, dtype u8
//! (0 = f32), then count*dim row-major little-endian f32 values, then an
//! id table of length-prefixed UTF-8 strings.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"EMST";
pub const VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    pub dim: usize,
    pub ids: Vec<String>,
    /// Row-major, ids.len() * dim values.
    pub values: Vec<f32>,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Self {
        EmbeddingStore { dim, ids: Vec::new(), values: Vec::new() }
    }

    pub fn push(&mut self, id: &str, embedding: &[f64]) -> Result<()> {
        if embedding.len() != self.dim {
            return Err(Error::Shape(format!(
                "embedding dim {} does not match store dim {}",
                embedding.len(),
                self.dim
            )));
        }
        if self.ids.iter().any(|x| x == id) {
            return Err(Error::Contract(format!("duplicate id {}", id)));
        }
        self.ids.push(id.to_string());
        self.values.extend(embedding.iter().map(|v| *v as f32));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.ids.len() as u64).to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&[DTYPE_F32])?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        for id in &self.ids {
            let bytes = id.as_bytes();
            w.write_all(&(bytes.len() as u16).to_le_bytes())?;
            w.write_all(bytes)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format(format!("bad store magic {:02x?}", magic)));
        }
        let mut v4 = [0u8; 4];
        read_exact(&mut r, &mut v4)?;
        let version = u32::from_le_bytes(v4);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported store version {}", version)));
        }
        let mut c8 = [0u8; 8];
        read_exact(&mut r, &mut c8)?;
        let count = u64::from_le_bytes(c8) as usize;
        read_exact(&mut r, &mut v4)?;
        let dim = u32::from_le_bytes(v4) as usize;
        let mut dt = [0u8; 1];
        read_exact(&mut r, &mut dt)?;
        if dt[0] != DTYPE_F32 {
            return Err(Error::Format(format!("unsupported dtype {}", dt[0])));
        }
        let mut values = vec![0f32; count * dim];
        for v in values.iter_mut() {
            read_exact(&mut r, &mut v4)?;
            *v = f32::from_le_bytes(v4);
        }
        let mut ids = Vec::with_capacity(count);
        let mut l2 = [0u8; 2];
        for _ in 0..count {
            read_exact(&mut r, &mut l2)?;
            let mut buf = vec![0u8; u16::from_le_bytes(l2) as usize];
            read_exact(&mut r, &mut buf)?;
            let id = String::from_utf8(buf).map_err(|_| Error::Format("id is not UTF-8".into()))?;
            if ids.contains(&id) {
                return Err(Error::Format(format!("duplicate id {} in store", id)));
            }
            ids.push(id);
        }
        Ok(EmbeddingStore { dim, ids, values })
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|e| Error::Format(format!("truncated store: {}", e)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn write_then_read_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.bin");
        let mut store = EmbeddingStore::new(3);
        store.push("a", &[0.1, -0.2, 0.3]).unwrap();
        store.push("b", &[1.0, 2.0, 3.0]).unwrap();
        store.write(&path).unwrap();
        assert_eq!(EmbeddingStore::read(&path).unwrap(), store);
    }

    #[test]
    fn empty_store_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.bin");
        let store = EmbeddingStore::new(8);
        store.write(&path).unwrap();
        let back = EmbeddingStore::read(&path).unwrap();
        assert!(back.is_empty());
        assert_eq!(back.dim, 8);
    }

    #[test]
    fn corrupted_magic_errors_without_panic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        std::fs::write(&path, b"XXXX123").unwrap();
        assert!(matches!(EmbeddingStore::read(&path), Err(Error::Format(_))));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut store = EmbeddingStore::new(2);
        store.push("a", &[1.0, 2.0]).unwrap();
        assert!(matches!(store.push("a", &[3.0, 4.0]), Err(Error::Contract(_))));
    }
}

//! Named f32 parameter tensors.
//!
//! Parameters persist at 32-bit precision; each training step upcasts them
//! to f64 tape leaves and rounds the update back. Everything that survives
//! across steps lives here, which is what makes checkpoint resume bitwise.

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// A named 2-D f32 tensor (vectors are 1xN).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn filled(rows: usize, cols: usize, v: f32) -> Self {
        Tensor { rows, cols, data: vec![v; rows * cols] }
    }

    pub fn to_matrix(&self) -> Matrix {
        let data = self.data.iter().map(|v| *v as f64).collect();
        Matrix::from_vec(self.rows, self.cols, data).expect("tensor shape is consistent")
    }

    pub fn from_matrix(m: &Matrix) -> Self {
        Tensor {
            rows: m.rows(),
            cols: m.cols(),
            data: m.data().iter().map(|v| *v as f32).collect(),
        }
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }
}

/// Ordered collection of named tensors. Order is insertion order and is
/// part of the store's identity (checkpoint layout, optimizer sweep).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    entries: Vec<(String, Tensor)>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, t: Tensor) {
        debug_assert!(self.get(name).is_none(), "duplicate tensor name {}", name);
        self.entries.push((name.to_string(), t));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.iter_mut().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    /// FNV-1a over names, shapes and little-endian f32 bytes. Used for
    /// freeze-contract assertions.
    pub fn content_hash(&self) -> u64 {
        let mut h = 0xcbf29ce484222325u64;
        let mut eat = |bytes: &[u8]| {
            for b in bytes {
                h ^= *b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        for (name, t) in &self.entries {
            eat(name.as_bytes());
            eat(&(t.rows as u64).to_le_bytes());
            eat(&(t.cols as u64).to_le_bytes());
            for v in &t.data {
                eat(&v.to_le_bytes());
            }
        }
        h
    }

    /// Elementwise arithmetic mean of two stores with identical layout.
    pub fn average(a: &ParamStore, b: &ParamStore) -> Result<ParamStore> {
        if a.entries.len() != b.entries.len() {
            return Err(Error::Shape(format!(
                "average: {} vs {} tensors",
                a.entries.len(),
                b.entries.len()
            )));
        }
        let mut out = ParamStore::new();
        for ((na, ta), (nb, tb)) in a.entries.iter().zip(&b.entries) {
            if na != nb || !ta.same_shape(tb) {
                return Err(Error::Shape(format!("average: mismatched tensor {} vs {}", na, nb)));
            }
            let data = ta
                .data
                .iter()
                .zip(&tb.data)
                .map(|(x, y)| ((*x as f64 + *y as f64) * 0.5) as f32)
                .collect();
            out.insert(na, Tensor { rows: ta.rows, cols: ta.cols, data });
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(v: f32) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("a", Tensor::filled(1, 1, v));
        s
    }

    #[test]
    fn average_of_identical_is_identity() {
        let s = store(1.5);
        assert_eq!(ParamStore::average(&s, &s).unwrap(), s);
    }

    #[test]
    fn average_of_opposites_is_zero() {
        let avg = ParamStore::average(&store(2.0), &store(-2.0)).unwrap();
        assert_eq!(avg.get("a").unwrap().data[0], 0.0);
    }

    #[test]
    fn average_hand_value() {
        let avg = ParamStore::average(&store(2.0), &store(4.0)).unwrap();
        assert_eq!(avg.get("a").unwrap().data[0], 3.0);
    }

    #[test]
    fn average_rejects_shape_mismatch() {
        let mut b = ParamStore::new();
        b.insert("a", Tensor::zeros(2, 2));
        assert!(ParamStore::average(&store(1.0), &b).is_err());
    }

    #[test]
    fn content_hash_tracks_values() {
        let a = store(1.0);
        let mut b = store(1.0);
        assert_eq!(a.content_hash(), b.content_hash());
        b.get_mut("a").unwrap().data[0] = 1.0000001;
        assert_ne!(a.content_hash(), b.content_hash());
    }
}

//! Post-hoc representation transforms: prefix truncation and binary
//! quantization, with their similarity kernels.

use crate::error::{Error, Result};

/// Truncation request.
#[derive(Debug, Clone, Copy)]
pub struct TruncationSpec {
    pub target_dim: usize,
    /// L2-renormalize the kept prefix (default on).
    pub renormalize: bool,
}

impl TruncationSpec {
    pub fn new(target_dim: usize) -> Self {
        TruncationSpec { target_dim, renormalize: true }
    }
}

/// Keep the first `target_dim` coordinates, optionally renormalizing.
pub fn truncate(e: &[f64], spec: &TruncationSpec) -> Result<Vec<f64>> {
    if spec.target_dim == 0 || spec.target_dim > e.len() {
        return Err(Error::Domain(format!(
            "truncate: target_dim {} outside [1, {}]",
            spec.target_dim,
            e.len()
        )));
    }
    let mut out = e[..spec.target_dim].to_vec();
    if spec.renormalize {
        let norm = crate::numerics::l2_norm(&out);
        if norm == 0.0 {
            return Err(Error::Domain("truncate: zero-norm prefix cannot be renormalized".into()));
        }
        for v in &mut out {
            *v /= norm;
        }
    }
    Ok(out)
}

/// Sign-bit embedding packed into 64-bit words, little-endian bit order
/// within each word: bit k of the embedding lives at word k/64, bit k%64.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryEmbedding {
    dim: usize,
    words: Vec<u64>,
}

impl BinaryEmbedding {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn bit(&self, k: usize) -> bool {
        (self.words[k / 64] >> (k % 64)) & 1 == 1
    }
}

/// Threshold at zero: bit k is 1 iff e[k] > 0 (exact zeros map to 0).
pub fn binarize(e: &[f64]) -> BinaryEmbedding {
    let mut words = vec![0u64; e.len().div_ceil(64)];
    for (k, v) in e.iter().enumerate() {
        if *v > 0.0 {
            words[k / 64] |= 1u64 << (k % 64);
        }
    }
    BinaryEmbedding { dim: e.len(), words }
}

/// (d - 2 * hamming) / d: the cosine of the corresponding +-1 vectors.
pub fn binary_similarity(a: &BinaryEmbedding, b: &BinaryEmbedding) -> Result<f64> {
    if a.dim != b.dim {
        return Err(Error::Shape(format!(
            "binary_similarity: {} vs {} bits",
            a.dim, b.dim
        )));
    }
    let mut hamming = 0u32;
    for (wa, wb) in a.words.iter().zip(&b.words) {
        hamming += (wa ^ wb).count_ones();
    }
    Ok((a.dim as f64 - 2.0 * hamming as f64) / a.dim as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncate_hand_value() {
        let out = truncate(&[3.0, 4.0, 0.0, 0.0], &TruncationSpec::new(2)).unwrap();
        assert!((out[0] - 0.6).abs() < 1e-12);
        assert!((out[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn truncate_full_dim_of_unit_vector_is_identity() {
        let e = [0.6, 0.8];
        let out = truncate(&e, &TruncationSpec::new(2)).unwrap();
        assert!((out[0] - 0.6).abs() < 1e-12 && (out[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn truncate_rejects_bad_dims() {
        assert!(truncate(&[1.0, 2.0], &TruncationSpec::new(0)).is_err());
        assert!(truncate(&[1.0, 2.0], &TruncationSpec::new(3)).is_err());
    }

    #[test]
    fn binarize_signs_and_scale_invariance() {
        let b = binarize(&[0.3, -0.2]);
        assert!(b.bit(0));
        assert!(!b.bit(1));
        let e = [0.4, -1.25, 0.01, -0.7];
        assert_eq!(binarize(&e), binarize(&e.map(|v| 2.0 * v)));
    }

    #[test]
    fn negation_complements_bits() {
        let e = [0.4, -1.25, 0.01, -0.7];
        let pos = binarize(&e);
        let neg = binarize(&e.map(|v| -v));
        for k in 0..e.len() {
            assert_ne!(pos.bit(k), neg.bit(k));
        }
    }

    #[test]
    fn binary_similarity_edges() {
        let a = binarize(&[1.0, -1.0, 1.0, 1.0]);
        assert_eq!(binary_similarity(&a, &a).unwrap(), 1.0);
        let comp = binarize(&[-1.0, 1.0, -1.0, -1.0]);
        assert_eq!(binary_similarity(&a, &comp).unwrap(), -1.0);
        // Hamming distance 1 at d=4.
        let one_off = binarize(&[1.0, -1.0, 1.0, -1.0]);
        assert_eq!(binary_similarity(&a, &one_off).unwrap(), 0.5);
    }

    #[test]
    fn zero_maps_to_bit_zero() {
        let b = binarize(&[0.0]);
        assert!(!b.bit(0));
    }
}

//! Toy whitespace tokenizer over a synthetic vocabulary.
//!
//! Words of the form `w<number>` map directly to their token id; anything
//! else falls back to a stable hash into the content range. Ids 0..4 are
//! reserved.

pub const TOKEN_PAD: u32 = 0;
pub const TOKEN_EOS: u32 = 1;
pub const TOKEN_QUERY_PREFIX: u32 = 2;
pub const TOKEN_DOC_PREFIX: u32 = 3;
/// First id available for content words.
pub const CONTENT_BASE: u32 = 4;

use crate::model::Role;

#[derive(Debug, Clone)]
pub struct Tokenizer {
    vocab_size: u32,
}

impl Tokenizer {
    pub fn new(vocab_size: usize) -> Self {
        assert!(vocab_size as u32 > CONTENT_BASE);
        Tokenizer { vocab_size: vocab_size as u32 }
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size as usize
    }

    pub fn role_token(role: Role) -> u32 {
        match role {
            Role::Query => TOKEN_QUERY_PREFIX,
            Role::Document => TOKEN_DOC_PREFIX,
        }
    }

    /// Render a content token id as its canonical word.
    pub fn word(id: u32) -> String {
        format!("w{:03}", id)
    }

    pub fn tokenize(&self, text: &str) -> Vec<u32> {
        text.split_whitespace().map(|w| self.word_id(w)).collect()
    }

    fn word_id(&self, word: &str) -> u32 {
        match word {
            "Query:" => TOKEN_QUERY_PREFIX,
            "Document:" => TOKEN_DOC_PREFIX,
            _ => {
                if let Some(rest) = word.strip_prefix('w') {
                    if let Ok(id) = rest.parse::<u32>() {
                        if id >= CONTENT_BASE && id < self.vocab_size {
                            return id;
                        }
                    }
                }
                // Stable byte-level fallback for out-of-vocabulary words.
                let mut h = 0xcbf29ce484222325u64;
                for b in word.as_bytes() {
                    h ^= *b as u64;
                    h = h.wrapping_mul(0x100000001b3);
                }
                CONTENT_BASE + (h % (self.vocab_size - CONTENT_BASE) as u64) as u32
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_words_round_trip() {
        let tok = Tokenizer::new(512);
        assert_eq!(tok.tokenize("w004 w511 w010"), vec![4, 511, 10]);
    }

    #[test]
    fn prefixes_map_to_reserved_ids() {
        let tok = Tokenizer::new(512);
        assert_eq!(tok.tokenize("Query: w007"), vec![TOKEN_QUERY_PREFIX, 7]);
        assert_eq!(tok.tokenize("Document: w007"), vec![TOKEN_DOC_PREFIX, 7]);
    }

    #[test]
    fn fallback_is_deterministic_and_in_range() {
        let tok = Tokenizer::new(512);
        let a = tok.tokenize("hello")[0];
        let b = tok.tokenize("hello")[0];
        assert_eq!(a, b);
        assert!(a >= CONTENT_BASE && a < 512);
    }
}

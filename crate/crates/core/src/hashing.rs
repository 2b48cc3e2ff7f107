//! Signed feature hashing of serialized request content.
//!
//! Every whitespace-delimited token `t` adds `+1` or `-1` at index
//! `h(t) mod 256`, where `h` is XXH64 over the token's UTF-8 bytes with a
//! fixed seed. Bit 63 of `h(t)` picks the sign (set means `-1`). Repeated
//! tokens accumulate.

use serde::{Deserialize, Serialize};

use crate::request::SerializedContent;

pub const FEATURE_DIM: usize = 256;
pub const DEFAULT_HASH_SEED: u64 = 0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn zeros() -> Self {
        Self(vec![0.0; FEATURE_DIM])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn nonzero(&self) -> usize {
        self.0.iter().filter(|v| **v != 0.0).count()
    }
}

/// Index and sign a token contributes.
pub fn token_slot(token: &str, seed: u64) -> (usize, f64) {
    let h = xxhash_rust::xxh64::xxh64(token.as_bytes(), seed);
    let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
    ((h % FEATURE_DIM as u64) as usize, sign)
}

pub fn hash_text(text: &str, seed: u64) -> FeatureVector {
    let mut v = FeatureVector::zeros();
    for tok in text.split_whitespace() {
        let (i, s) = token_slot(tok, seed);
        v.0[i] += s;
    }
    v
}

pub fn hash_features(content: &SerializedContent, seed: u64) -> FeatureVector {
    hash_text(&content.text, seed)
}

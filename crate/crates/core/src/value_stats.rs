use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::segment::{char_entropy, classify_segment, SegmentClass};

pub const DEFAULT_EXAMPLE_CAP: usize = 16;

/// Distinct values are counted exactly up to this many, then estimated.
pub const DISTINCT_EXACT_LIMIT: usize = 1024;

const VALUE_SEED: u64 = 0x5EED_0FA1_10E5;

fn value_hash(v: &str) -> u64 {
    xxhash_rust::xxh64::xxh64(v.as_bytes(), VALUE_SEED)
}

/// Bottom-k sketch over value hashes. Exact while fewer than
/// [`DISTINCT_EXACT_LIMIT`] distinct values have been seen; afterwards the
/// k-minimum-values estimator applies. Merging is a set union, so it is
/// commutative and associative.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistinctCounter {
    hashes: BTreeSet<u64>,
    saturated: bool,
}

impl DistinctCounter {
    pub fn insert(&mut self, h: u64) {
        if self.saturated {
            if let Some(&max) = self.hashes.last() {
                if h >= max {
                    return;
                }
            }
        }
        if self.hashes.insert(h) && self.hashes.len() > DISTINCT_EXACT_LIMIT {
            self.hashes.pop_last();
            self.saturated = true;
        }
    }

    pub fn merge(&mut self, other: &DistinctCounter) {
        self.saturated |= other.saturated;
        self.hashes.extend(other.hashes.iter().copied());
        while self.hashes.len() > DISTINCT_EXACT_LIMIT {
            self.hashes.pop_last();
            self.saturated = true;
        }
    }

    pub fn estimate(&self) -> u64 {
        if !self.saturated {
            return self.hashes.len() as u64;
        }
        let kth = *self.hashes.last().expect("saturated sketch is full") as f64;
        let k = self.hashes.len() as f64;
        ((k - 1.0) * (u64::MAX as f64) / kth).round() as u64
    }

    pub fn is_exact(&self) -> bool {
        !self.saturated
    }
}

/// Summary of an observed population of string values (path labels or query
/// values).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValueStats {
    pub count: u64,
    /// Up to `example_cap` distinct values with the smallest hashes, so the
    /// sample is deterministic and merges commute.
    pub examples: Vec<String>,
    pub example_cap: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub type_counts: BTreeMap<SegmentClass, u64>,
    pub distinct: DistinctCounter,
    /// Sum of per-value entropies in micro-bits; integer so merges are exact.
    pub entropy_micro_sum: u64,
}

impl Default for ValueStats {
    fn default() -> Self {
        Self::with_cap(DEFAULT_EXAMPLE_CAP)
    }
}

impl ValueStats {
    pub fn with_cap(example_cap: usize) -> Self {
        Self {
            count: 0,
            examples: Vec::new(),
            example_cap,
            min_len: 0,
            max_len: 0,
            type_counts: BTreeMap::new(),
            distinct: DistinctCounter::default(),
            entropy_micro_sum: 0,
        }
    }

    pub fn observe(&mut self, value: &str) {
        self.observe_n(value, 1);
    }

    /// Records `n` observations of the same value.
    pub fn observe_n(&mut self, value: &str, n: u64) {
        if n == 0 {
            return;
        }
        let len = value.chars().count();
        if self.count == 0 {
            self.min_len = len;
            self.max_len = len;
        } else {
            self.min_len = self.min_len.min(len);
            self.max_len = self.max_len.max(len);
        }
        self.count += n;
        *self.type_counts.entry(classify_segment(value)).or_default() += n;
        let h = value_hash(value);
        self.distinct.insert(h);
        self.offer_example(h, value);
        self.entropy_micro_sum += n * (char_entropy(value) * 1e6).round() as u64;
    }

    fn offer_example(&mut self, h: u64, value: &str) {
        let key = (h, value);
        let pos = self
            .examples
            .binary_search_by(|e| (value_hash(e), e.as_str()).cmp(&key));
        if let Err(pos) = pos {
            if pos < self.example_cap {
                self.examples.insert(pos, value.to_string());
                self.examples.truncate(self.example_cap);
            }
        }
    }

    pub fn merge(&mut self, other: &ValueStats) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            self.min_len = other.min_len;
            self.max_len = other.max_len;
        } else {
            self.min_len = self.min_len.min(other.min_len);
            self.max_len = self.max_len.max(other.max_len);
        }
        self.count += other.count;
        for (k, v) in &other.type_counts {
            *self.type_counts.entry(*k).or_default() += v;
        }
        self.distinct.merge(&other.distinct);
        for e in &other.examples {
            self.offer_example(value_hash(e), e);
        }
        self.entropy_micro_sum += other.entropy_micro_sum;
    }

    pub fn distinct_estimate(&self) -> u64 {
        self.distinct.estimate()
    }

    /// Mean per-character entropy over all observations, in bits.
    pub fn mean_entropy(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.entropy_micro_sum as f64 / 1e6 / self.count as f64
        }
    }

    /// Majority class by observation count. Ties, and a `static` majority,
    /// resolve to `other_dynamic`.
    pub fn majority_class(&self) -> SegmentClass {
        let max = self.type_counts.values().copied().max().unwrap_or(0);
        let winners: Vec<SegmentClass> = self
            .type_counts
            .iter()
            .filter(|(_, &c)| c == max && c > 0)
            .map(|(k, _)| *k)
            .collect();
        match winners.as_slice() {
            [only] if *only != SegmentClass::Static => *only,
            _ => SegmentClass::OtherDynamic,
        }
    }

    pub fn observed_classes(&self) -> BTreeSet<SegmentClass> {
        self.type_counts
            .iter()
            .filter(|(_, &c)| c > 0)
            .map(|(k, _)| *k)
            .collect()
    }
}

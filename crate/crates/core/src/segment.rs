//! Scalar classification of path segments and parameter values.
//!
//! Patterns, checked in this order:
//!
//! | class          | rule                                                        |
//! |----------------|-------------------------------------------------------------|
//! | `integer`      | `^[0-9]+$`                                                  |
//! | `uuid`         | canonical 8-4-4-4-12 hex                                    |
//! | `email`        | one `@`, non-empty local part, dotted domain, no whitespace |
//! | `hex`          | `^[0-9a-fA-F]{8,}$`                                         |
//! | `alnum_random` | length >= 8 over `[A-Za-z0-9_-]`, at least two of lower/upper/digit, entropy >= 2.5 bits/char |
//! | `static`       | everything else                                             |
//!
//! `other_dynamic` is never produced by classification; it is the placeholder
//! type for merged groups with no dominant scalar class.

use serde::{Deserialize, Serialize};

/// Minimum per-character entropy (bits) for a token to count as random.
pub const RANDOM_TOKEN_MIN_ENTROPY: f64 = 2.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentClass {
    Static,
    Integer,
    Uuid,
    Email,
    Hex,
    AlnumRandom,
    OtherDynamic,
}

impl SegmentClass {
    pub const ALL: [SegmentClass; 7] = [
        SegmentClass::Static,
        SegmentClass::Integer,
        SegmentClass::Uuid,
        SegmentClass::Email,
        SegmentClass::Hex,
        SegmentClass::AlnumRandom,
        SegmentClass::OtherDynamic,
    ];

    pub fn is_dynamic(self) -> bool {
        self != SegmentClass::Static
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SegmentClass::Static => "static",
            SegmentClass::Integer => "integer",
            SegmentClass::Uuid => "uuid",
            SegmentClass::Email => "email",
            SegmentClass::Hex => "hex",
            SegmentClass::AlnumRandom => "alnum_random",
            SegmentClass::OtherDynamic => "other_dynamic",
        }
    }

    /// Whether a placeholder of this type admits a value of class `value_class`
    /// under strict typing. Supersets follow the character sets: every integer
    /// of length >= 8 is valid hex, every hex string is a valid random token.
    pub fn admits(self, value_class: SegmentClass, value: &str) -> bool {
        match self {
            SegmentClass::OtherDynamic => true,
            SegmentClass::Static => value_class == SegmentClass::Static,
            SegmentClass::Integer => value_class == SegmentClass::Integer,
            SegmentClass::Uuid => value_class == SegmentClass::Uuid,
            SegmentClass::Email => value_class == SegmentClass::Email,
            SegmentClass::Hex => {
                value_class == SegmentClass::Hex
                    || (value_class == SegmentClass::Integer && is_hex(value))
            }
            SegmentClass::AlnumRandom => is_token_charset(value) && !value.is_empty(),
        }
    }
}

impl std::fmt::Display for SegmentClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

fn is_hex(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_hexdigit())
}

fn is_token_charset(s: &str) -> bool {
    s.bytes()
        .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

fn is_uuid(s: &str) -> bool {
    let b = s.as_bytes();
    if b.len() != 36 {
        return false;
    }
    b.iter().enumerate().all(|(i, &c)| match i {
        8 | 13 | 18 | 23 => c == b'-',
        _ => c.is_ascii_hexdigit(),
    })
}

fn is_email(s: &str) -> bool {
    if s.chars().any(|c| c.is_whitespace() || c == '/') {
        return false;
    }
    let mut parts = s.split('@');
    let (Some(local), Some(domain), None) = (parts.next(), parts.next(), parts.next()) else {
        return false;
    };
    !local.is_empty() && domain.contains('.') && !domain.starts_with('.') && !domain.ends_with('.')
}

/// Mean Shannon entropy of the character distribution, in bits per character.
pub fn char_entropy(s: &str) -> f64 {
    let mut counts: std::collections::HashMap<char, u32> = std::collections::HashMap::new();
    let mut n = 0u32;
    for c in s.chars() {
        *counts.entry(c).or_default() += 1;
        n += 1;
    }
    if n == 0 {
        return 0.0;
    }
    let n = f64::from(n);
    // sort so the float sum is independent of hash order
    let mut freqs: Vec<u32> = counts.into_values().collect();
    freqs.sort_unstable();
    freqs
        .into_iter()
        .map(|c| {
            let p = f64::from(c) / n;
            -p * p.log2()
        })
        .sum()
}

fn is_random_token(s: &str) -> bool {
    if s.len() < 8 || !is_token_charset(s) {
        return false;
    }
    let lower = s.bytes().any(|b| b.is_ascii_lowercase());
    let upper = s.bytes().any(|b| b.is_ascii_uppercase());
    let digit = s.bytes().any(|b| b.is_ascii_digit());
    let mixed = [lower, upper, digit].iter().filter(|x| **x).count() >= 2;
    mixed && char_entropy(s) >= RANDOM_TOKEN_MIN_ENTROPY
}

pub fn classify_segment(value: &str) -> SegmentClass {
    if !value.is_empty() && value.bytes().all(|b| b.is_ascii_digit()) {
        SegmentClass::Integer
    } else if is_uuid(value) {
        SegmentClass::Uuid
    } else if is_email(value) {
        SegmentClass::Email
    } else if value.len() >= 8 && is_hex(value) {
        SegmentClass::Hex
    } else if is_random_token(value) {
        SegmentClass::AlnumRandom
    } else {
        SegmentClass::Static
    }
}

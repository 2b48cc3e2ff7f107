//! Per-tag payload banks (`data/payloads/*.txt`, one payload per line) and
//! the mutations applied when generating attacks.

use percent_encoding::{utf8_percent_encode, NON_ALPHANUMERIC};
use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::AttackTag;

const SQLI: &str = include_str!("../../data/payloads/sqli.txt");
const XSS: &str = include_str!("../../data/payloads/xss.txt");
const LOG_FORGING: &str = include_str!("../../data/payloads/log_forging.txt");
const RCE: &str = include_str!("../../data/payloads/rce.txt");
const COOKIE: &str = include_str!("../../data/payloads/cookie_injection.txt");
const TRAVERSAL: &str = include_str!("../../data/payloads/directory_traversal.txt");
const LOG4J: &str = include_str!("../../data/payloads/log4j.txt");

pub fn bank(tag: AttackTag) -> Vec<&'static str> {
    let raw = match tag {
        AttackTag::Sqli => SQLI,
        AttackTag::Xss => XSS,
        AttackTag::LogForging => LOG_FORGING,
        AttackTag::Rce => RCE,
        AttackTag::CookieInjection => COOKIE,
        AttackTag::DirectoryTraversal => TRAVERSAL,
        AttackTag::Log4j => LOG4J,
    };
    raw.lines().filter(|l| !l.trim().is_empty()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mutation {
    None,
    RandomCase,
    UrlEncode,
    WhitespacePad,
}

impl Mutation {
    pub const ALL: [Mutation; 4] = [
        Mutation::None,
        Mutation::RandomCase,
        Mutation::UrlEncode,
        Mutation::WhitespacePad,
    ];
}

pub fn mutate<R: Rng>(payload: &str, m: Mutation, rng: &mut R) -> String {
    match m {
        Mutation::None => payload.to_string(),
        Mutation::RandomCase => payload
            .chars()
            .map(|c| {
                if rng.random_bool(0.5) {
                    c.to_ascii_uppercase()
                } else {
                    c.to_ascii_lowercase()
                }
            })
            .collect(),
        Mutation::UrlEncode => utf8_percent_encode(payload, NON_ALPHANUMERIC).to_string(),
        Mutation::WhitespacePad => {
            let pads = [" ", "  ", "\t"];
            let mut out = String::new();
            out.push_str(pads.choose(rng).unwrap());
            for c in payload.chars() {
                out.push(c);
                if !c.is_alphanumeric() && rng.random_bool(0.3) {
                    out.push(' ');
                }
            }
            out.push_str(pads.choose(rng).unwrap());
            out
        }
    }
}

/// A payload from `tag`'s bank with a random mutation applied.
pub fn draw<R: Rng>(tag: AttackTag, rng: &mut R) -> (String, Mutation) {
    let b = bank(tag);
    let p = b.choose(rng).expect("bank is non-empty");
    let m = *Mutation::ALL.choose(rng).unwrap();
    (mutate(p, m, rng), m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn banks_hold_about_fifty_non_alphanumeric_payloads() {
        for t in AttackTag::ALL {
            let b = bank(t);
            assert!(b.len() >= 45, "{t}: {}", b.len());
            for p in b {
                assert!(p.chars().any(|c| !c.is_ascii_alphanumeric()), "{t}: {p}");
            }
        }
    }

    #[test]
    fn mutations_keep_content() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = "' OR 1=1--";
        assert_eq!(
            mutate(p, Mutation::RandomCase, &mut rng).to_lowercase(),
            p.to_lowercase()
        );
        assert_eq!(
            mutate(p, Mutation::UrlEncode, &mut rng),
            "%27%20OR%201%3D1%2D%2D"
        );
        let padded = mutate(p, Mutation::WhitespacePad, &mut rng);
        assert_eq!(
            padded.split_whitespace().collect::<String>(),
            p.split_whitespace().collect::<String>()
        );
    }
}

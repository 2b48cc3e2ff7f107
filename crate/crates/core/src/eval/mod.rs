//! Labeled corpora, a synthetic traffic generator and precision/recall
//! reporting.

pub mod dataset;
pub mod generator;
pub mod metrics;
pub mod payloads;

use serde::{Deserialize, Serialize};

use crate::request::RawRequest;

pub use dataset::{load_dataset, DatasetFormat};
pub use generator::{
    default_templates, generate_corpus, EndpointTemplate, GeneratorConfig, Injection,
};
pub use metrics::{run_benchmark, BenchConfig, BenchReport, Metrics};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AttackTag {
    #[serde(rename = "SQLi")]
    Sqli,
    #[serde(rename = "XSS")]
    Xss,
    LogForging,
    #[serde(rename = "RCE")]
    Rce,
    CookieInjection,
    DirectoryTraversal,
    #[serde(rename = "LOG4J")]
    Log4j,
}

impl AttackTag {
    pub const ALL: [AttackTag; 7] = [
        AttackTag::Sqli,
        AttackTag::Xss,
        AttackTag::LogForging,
        AttackTag::Rce,
        AttackTag::CookieInjection,
        AttackTag::DirectoryTraversal,
        AttackTag::Log4j,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AttackTag::Sqli => "SQLi",
            AttackTag::Xss => "XSS",
            AttackTag::LogForging => "LogForging",
            AttackTag::Rce => "RCE",
            AttackTag::CookieInjection => "CookieInjection",
            AttackTag::DirectoryTraversal => "DirectoryTraversal",
            AttackTag::Log4j => "LOG4J",
        }
    }

    /// Row name used in report tables.
    pub fn display_name(self) -> &'static str {
        match self {
            AttackTag::Sqli => "SQL Injection",
            AttackTag::Xss => "XSS",
            AttackTag::LogForging => "Log Forging",
            AttackTag::Rce => "RCE",
            AttackTag::CookieInjection => "Cookie Injection",
            AttackTag::DirectoryTraversal => "Directory Traversal",
            AttackTag::Log4j => "LOG4J",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        Some(match norm.as_str() {
            "sqli" | "sqlinjection" => AttackTag::Sqli,
            "xss" | "crosssitescripting" => AttackTag::Xss,
            "logforging" => AttackTag::LogForging,
            "rce" | "remotecodeexecution" => AttackTag::Rce,
            "cookieinjection" => AttackTag::CookieInjection,
            "directorytraversal" | "pathtraversal" => AttackTag::DirectoryTraversal,
            "log4j" | "log4jexploits" => AttackTag::Log4j,
            _ => return None,
        })
    }
}

impl std::fmt::Display for AttackTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    UrlEmbedded,
    BodyHeaderEmbedded,
}

impl Placement {
    pub fn as_str(self) -> &'static str {
        match self {
            Placement::UrlEmbedded => "url",
            Placement::BodyHeaderEmbedded => "body_header",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Placement::UrlEmbedded => "URL",
            Placement::BodyHeaderEmbedded => "Body/Header",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub tag: AttackTag,
    pub placement: Placement,
    pub count: usize,
}

/// What a record's label says about it. Labels are only used for scoring.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LabelKind {
    Benign,
    /// `tag` is a free-form category (generator tags or a dataset's own).
    Attack {
        tag: String,
        placement: Option<Placement>,
    },
}

/// Generated attack label: `attack:<TAG>:<placement>`.
pub fn attack_label(tag: AttackTag, placement: Placement) -> String {
    format!("attack:{}:{}", tag.as_str(), placement.as_str())
}

pub const BENIGN_LABEL: &str = "normal";

pub fn label_kind(label: Option<&str>) -> LabelKind {
    let Some(l) = label.map(str::trim) else {
        return LabelKind::Benign;
    };
    match l.to_ascii_lowercase().as_str() {
        "" | "normal" | "benign" | "valid" | "0" | "false" => return LabelKind::Benign,
        _ => {}
    }
    if let Some(rest) = l.strip_prefix("attack:") {
        let (tag, placement) = match rest.split_once(':') {
            Some((t, "url")) => (t, Some(Placement::UrlEmbedded)),
            Some((t, "body_header")) => (t, Some(Placement::BodyHeaderEmbedded)),
            Some((t, _)) => (t, None),
            None => (rest, None),
        };
        return LabelKind::Attack {
            tag: tag.to_string(),
            placement,
        };
    }
    LabelKind::Attack {
        tag: l.to_string(),
        placement: None,
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledCorpus {
    /// Benign only.
    pub train: Vec<RawRequest>,
    pub test: Vec<RawRequest>,
    /// For generated corpora, where each test attack's payload sits
    /// (parallel to `test`; `None` for benign records). Empty for loaded data.
    pub injections: Vec<Option<Injection>>,
}

impl LabeledCorpus {
    pub fn len(&self) -> usize {
        self.train.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Puts the first `train_fraction` of benign records (in input order) in
    /// `train` and everything else in `test`. Records whose label is an
    /// attack never enter `train`.
    pub fn split(records: Vec<RawRequest>, train_fraction: f64) -> Self {
        let benign = records
            .iter()
            .filter(|r| label_kind(r.label.as_deref()) == LabelKind::Benign)
            .count();
        let mut quota = (benign as f64 * train_fraction.clamp(0.0, 1.0)).floor() as usize;
        let mut c = LabeledCorpus::default();
        for r in records {
            if quota > 0 && label_kind(r.label.as_deref()) == LabelKind::Benign {
                quota -= 1;
                c.train.push(r);
            } else {
                c.test.push(r);
            }
        }
        c
    }

    pub fn train_is_clean(&self) -> bool {
        self.train
            .iter()
            .all(|r| label_kind(r.label.as_deref()) == LabelKind::Benign)
    }
}

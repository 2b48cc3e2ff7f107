//! Precision, recall and F1 per attack tag, for the whole pipeline and for
//! each detection stage on its own.
//!
//! Each tag is scored over a pool of every benign test record plus that
//! tag's attacks. A record counts as flagged when its verdict is anomalous;
//! the per-stage views only count anomalies raised by that stage.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{label_kind, AttackTag, LabelKind, LabeledCorpus, Placement};
use crate::config::EngineConfig;
use crate::engine::{BaselineReport, Engine};
use crate::error::Result;
use crate::request::RawRequest;
use crate::stats::LatencySummary;
use crate::verdict::{Stage, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    /// `None` when nothing was flagged.
    pub precision: Option<f64>,
    /// `None` when the pool has no attacks.
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

impl Metrics {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        let precision = (tp + fp > 0).then(|| tp as f64 / (tp + fp) as f64);
        let recall = (tp + fn_ > 0).then(|| tp as f64 / (tp + fn_) as f64);
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            (Some(_), Some(_)) => Some(0.0),
            _ => None,
        };
        Self {
            tp,
            fp,
            fn_,
            tn,
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MacroAverage {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

fn mean_defined(xs: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = xs.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

impl MacroAverage {
    pub fn of<'a>(ms: impl Iterator<Item = &'a Metrics> + Clone) -> Self {
        Self {
            precision: mean_defined(ms.clone().map(|m| m.precision)),
            recall: mean_defined(ms.clone().map(|m| m.recall)),
            f1: mean_defined(ms.map(|m| m.f1)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagRow {
    pub tag: String,
    pub placement: Option<Placement>,
    pub attacks: u64,
    pub overall: Metrics,
    pub structural: Metrics,
    pub content: Metrics,
}

impl TagRow {
    pub fn display_name(&self) -> String {
        let base =
            AttackTag::parse(&self.tag).map_or(self.tag.clone(), |t| t.display_name().to_string());
        match self.placement {
            Some(p) => format!("{base} ({})", p.display_name()),
            None => base,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BenignCounts {
    pub total: u64,
    pub flagged: u64,
    pub flagged_structural: u64,
    pub flagged_content: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<TagRow>,
    pub macro_overall: MacroAverage,
    pub macro_structural: MacroAverage,
    pub macro_content: MacroAverage,
    pub benign: BenignCounts,
    pub latency: LatencySummary,
    pub train_requests: usize,
    pub test_requests: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<BaselineReport>,
    pub train_seconds: f64,
    pub classify_seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub engine: EngineConfig,
}

fn flagged_by(v: &Verdict, stage: Option<Stage>) -> bool {
    v.is_anomalous() && stage.is_none_or(|s| v.stage == s)
}

/// Scores verdicts against labels. `verdicts[i]` belongs to `test[i]`.
pub fn score(test: &[RawRequest], verdicts: &[Verdict]) -> BenchReport {
    assert_eq!(test.len(), verdicts.len());
    let mut benign: Vec<&Verdict> = Vec::new();
    let mut attacks: BTreeMap<(String, Option<Placement>), Vec<&Verdict>> = BTreeMap::new();
    for (r, v) in test.iter().zip(verdicts) {
        match label_kind(r.label.as_deref()) {
            LabelKind::Benign => benign.push(v),
            LabelKind::Attack { tag, placement } => {
                attacks.entry((tag, placement)).or_default().push(v)
            }
        }
    }
    let count = |vs: &[&Verdict], stage: Option<Stage>| {
        vs.iter().filter(|v| flagged_by(v, stage)).count() as u64
    };
    let n_benign = benign.len() as u64;
    let metrics = |vs: &[&Verdict], stage: Option<Stage>| {
        let tp = count(vs, stage);
        let fp = count(&benign, stage);
        Metrics::from_counts(tp, fp, vs.len() as u64 - tp, n_benign - fp)
    };
    let rows: Vec<TagRow> = attacks
        .into_iter()
        .map(|((tag, placement), vs)| TagRow {
            tag,
            placement,
            attacks: vs.len() as u64,
            overall: metrics(&vs, None),
            structural: metrics(&vs, Some(Stage::Structural)),
            content: metrics(&vs, Some(Stage::Content)),
        })
        .collect();
    BenchReport {
        macro_overall: MacroAverage::of(rows.iter().map(|r| &r.overall)),
        macro_structural: MacroAverage::of(rows.iter().map(|r| &r.structural)),
        macro_content: MacroAverage::of(rows.iter().map(|r| &r.content)),
        rows,
        benign: BenignCounts {
            total: n_benign,
            flagged: count(&benign, None),
            flagged_structural: count(&benign, Some(Stage::Structural)),
            flagged_content: count(&benign, Some(Stage::Content)),
        },
        test_requests: test.len(),
        ..BenchReport::default()
    }
}

/// Learns the training split, baselines, then classifies the test split
/// one request at a time on the calling thread.
pub fn run_benchmark(corpus: &LabeledCorpus, cfg: &BenchConfig) -> Result<BenchReport> {
    let engine = Engine::new(cfg.engine.clone());
    let t0 = Instant::now();
    for r in &corpus.train {
        engine.ingest(r);
    }
    let baseline = engine.baseline()?;
    let train_seconds = t0.elapsed().as_secs_f64();
    let (mut report, classify_seconds) = evaluate(&engine, &corpus.test)?;
    report.train_requests = corpus.train.len();
    report.baseline = Some(baseline);
    report.train_seconds = train_seconds;
    report.classify_seconds = classify_seconds;
    Ok(report)
}

/// Classifies `test` against a baselined engine and scores the verdicts.
pub fn evaluate(engine: &Engine, test: &[RawRequest]) -> Result<(BenchReport, f64)> {
    let before = engine.latency_samples().len();
    let t1 = Instant::now();
    let verdicts: Vec<Verdict> = test
        .iter()
        .map(|r| engine.classify_raw(r))
        .collect::<Result<_>>()?;
    let secs = t1.elapsed().as_secs_f64();
    let mut report = score(test, &verdicts);
    let samples = engine.latency_samples();
    report.latency = LatencySummary::from_samples(&samples[before.min(samples.len())..]);
    Ok((report, secs))
}

fn pct(x: Option<f64>) -> String {
    x.map_or_else(|| "N/A".into(), |v| format!("{:.2}", v * 100.0))
}

impl BenchReport {
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned text tables: per-tag metrics for each stage and overall,
    /// macro averages, benign false positives and the latency summary.
    pub fn to_text(&self) -> String {
        let name_w = self
            .rows
            .iter()
            .map(|r| r.display_name().len())
            .chain([self.macro_label().len(), "Attack Type".len()])
            .max()
            .unwrap_or(12);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<name_w$} | {:^23} | {:^23} | {:^23}",
            "", "Structural", "Autoencoder", "Overall"
        );
        let _ = writeln!(
            out,
            "{:<name_w$} | {:>7} {:>7} {:>7} | {:>7} {:>7} {:>7} | {:>7} {:>7} {:>7}",
            "Attack Type", "Prec.", "Rec.", "F1", "Prec.", "Rec.", "F1", "Prec.", "Rec.", "F1"
        );
        let rule = "-".repeat(name_w + 3 * 26);
        let _ = writeln!(out, "{rule}");
        let line = |out: &mut String,
                    name: &str,
                    s: (Option<f64>, Option<f64>, Option<f64>),
                    c: (Option<f64>, Option<f64>, Option<f64>),
                    o: (Option<f64>, Option<f64>, Option<f64>)| {
            let _ = writeln!(
                out,
                "{:<name_w$} | {:>7} {:>7} {:>7} | {:>7} {:>7} {:>7} | {:>7} {:>7} {:>7}",
                name,
                pct(s.0),
                pct(s.1),
                pct(s.2),
                pct(c.0),
                pct(c.1),
                pct(c.2),
                pct(o.0),
                pct(o.1),
                pct(o.2)
            );
        };
        let t = |m: &Metrics| (m.precision, m.recall, m.f1);
        let tm = |m: &MacroAverage| (m.precision, m.recall, m.f1);
        for r in &self.rows {
            line(
                &mut out,
                &r.display_name(),
                t(&r.structural),
                t(&r.content),
                t(&r.overall),
            );
        }
        let _ = writeln!(out, "{rule}");
        line(
            &mut out,
            &self.macro_label(),
            tm(&self.macro_structural),
            tm(&self.macro_content),
            tm(&self.macro_overall),
        );
        let _ = writeln!(
            out,
            "\nbenign: {} total, {} flagged ({} structural, {} content)",
            self.benign.total,
            self.benign.flagged,
            self.benign.flagged_structural,
            self.benign.flagged_content
        );
        let _ = writeln!(
            out,
            "requests: {} train, {} test; train {:.2}s, classify {:.2}s",
            self.train_requests, self.test_requests, self.train_seconds, self.classify_seconds
        );
        let _ = writeln!(out, "\nclassification latency (s/request)");
        out.push_str(&self.latency.to_table());
        out
    }

    fn macro_label(&self) -> String {
        let placements: std::collections::BTreeSet<_> =
            self.rows.iter().map(|r| r.placement).collect();
        match placements.into_iter().collect::<Vec<_>>().as_slice() {
            [Some(p)] => format!("Macro Average ({})", p.display_name()),
            _ => "Macro Average".into(),
        }
    }

    pub fn row(&self, tag: AttackTag) -> Option<&TagRow> {
        self.rows
            .iter()
            .find(|r| AttackTag::parse(&r.tag) == Some(tag))
    }
}

mod common;

use std::collections::BTreeMap;

use apimap::eval::generator::{GeneratorConfig, InjectionSite};
use apimap::eval::metrics::score;
use apimap::eval::{attack_label, default_templates, generate_corpus, AttackTag, Placement};
use apimap::graph::{build_graph, validate, TolerancePolicy};
use apimap::reducer::reduce_tree;
use apimap::verdict::{Reason, Stage};
use apimap::{RawRequest, ReasonCode, Verdict};
use common::{rng, tree_of, K};
use percent_encoding::percent_decode_str;
use rand::seq::IndexedRandom;
use rand::Rng;

fn decode(s: &str) -> String {
    percent_decode_str(s).decode_utf8_lossy().into_owned()
}

#[test]
fn every_attack_carries_its_payload_at_the_declared_site() {
    for placement in [Placement::UrlEmbedded, Placement::BodyHeaderEmbedded] {
        let c = generate_corpus(
            &default_templates(),
            &GeneratorConfig::standard(placement, 7),
        );
        assert_eq!(c.test.len(), c.injections.len());
        let mut attacks = 0;
        for (r, inj) in c.test.iter().zip(&c.injections) {
            let Some(inj) = inj else {
                assert_eq!(r.label.as_deref(), Some("normal"));
                continue;
            };
            attacks += 1;
            assert_eq!(inj.placement, placement);
            assert_eq!(
                r.label.as_deref(),
                Some(attack_label(inj.tag, placement).as_str())
            );
            let (path, query) = r.url.split_once('?').unwrap_or((&r.url, ""));
            match &inj.site {
                InjectionSite::PathSlot(i) => {
                    let raw: Vec<&str> = path.split('/').skip(1).collect();
                    assert_eq!(decode(raw[*i]), inj.payload, "{}", r.url);
                }
                InjectionSite::Query => {
                    let last = query.rsplit('&').next().unwrap();
                    assert!(!last.contains('='), "{}", r.url);
                    assert_eq!(decode(last), inj.payload, "{}", r.url);
                }
                InjectionSite::BodyField(k) => {
                    let body = String::from_utf8(r.body.clone()).unwrap();
                    assert!(
                        body.contains(&format!("\"{k}\": \"{}\"", inj.payload)),
                        "{body}"
                    );
                }
                InjectionSite::Header(h) => {
                    let v = r
                        .headers
                        .iter()
                        .find(|(n, _)| n == h)
                        .map(|(_, v)| v.as_str());
                    assert_eq!(v, Some(inj.payload.as_str()));
                }
            }
        }
        assert_eq!(attacks, 7 * 1_400);
    }
}

#[test]
fn benign_traffic_is_structurally_accepted() {
    let c = generate_corpus(
        &default_templates(),
        &GeneratorConfig::standard(Placement::UrlEmbedded, 7),
    );
    let g = build_graph(&reduce_tree(&tree_of(&c.train), K));
    let policy = TolerancePolicy::default();
    let benign = c
        .test
        .iter()
        .zip(&c.injections)
        .filter(|(_, i)| i.is_none());
    for (r, _) in c.train.iter().map(|r| (r, &None)).chain(benign) {
        let v = validate(&g, &common::parsed(r), &policy);
        assert!(!v.is_anomalous(), "{} {}: {:?}", r.method, r.url, v.reasons);
    }
}

#[test]
fn metrics_match_a_brute_force_confusion_count() {
    let mut r = rng(30);
    let tags = [AttackTag::Sqli, AttackTag::Xss, AttackTag::Rce];
    let mut test = Vec::new();
    let mut verdicts = Vec::new();
    for i in 0..1000 {
        let label = if r.random_bool(0.4) {
            "normal".to_string()
        } else {
            attack_label(*tags.choose(&mut r).unwrap(), Placement::UrlEmbedded)
        };
        test.push(RawRequest::new("GET", format!("/r/{i}")).label(label));
        verdicts.push(match r.random_range(0..3) {
            0 => Verdict::accepted(),
            k => Verdict::anomalous(
                if k == 1 {
                    Stage::Structural
                } else {
                    Stage::Content
                },
                Reason {
                    code: ReasonCode::UnknownSegment,
                    location: "/".into(),
                    token: String::new(),
                },
            ),
        });
    }
    let report = score(&test, &verdicts);

    for stage in [None, Some(Stage::Structural), Some(Stage::Content)] {
        let flagged = |v: &Verdict| v.is_anomalous() && stage.is_none_or(|s| v.stage == s);
        let mut counts: BTreeMap<String, [u64; 4]> = BTreeMap::new();
        let mut fp = 0u64;
        let mut tn = 0u64;
        for (t, v) in test.iter().zip(&verdicts) {
            let l = t.label.as_deref().unwrap();
            if l == "normal" {
                if flagged(v) {
                    fp += 1
                } else {
                    tn += 1
                }
            } else {
                let tag = l.split(':').nth(1).unwrap().to_string();
                let e = counts.entry(tag).or_default();
                if flagged(v) {
                    e[0] += 1
                } else {
                    e[1] += 1
                }
            }
        }
        assert_eq!(report.rows.len(), counts.len());
        let mut f1s = Vec::new();
        for row in &report.rows {
            let m = match stage {
                None => &row.overall,
                Some(Stage::Structural) => &row.structural,
                _ => &row.content,
            };
            let [tp, fn_, ..] = counts[&row.tag];
            assert_eq!(
                (m.tp, m.fp, m.fn_, m.tn),
                (tp, fp, fn_, tn),
                "{} {stage:?}",
                row.tag
            );
            let p = tp as f64 / (tp + fp) as f64;
            let rc = tp as f64 / (tp + fn_) as f64;
            let f1 = 2.0 * p * rc / (p + rc);
            assert!((m.precision.unwrap() - p).abs() < 1e-12);
            assert!((m.recall.unwrap() - rc).abs() < 1e-12);
            assert!((m.f1.unwrap() - f1).abs() < 1e-12);
            f1s.push(f1);
        }
        let macro_f1 = match stage {
            None => report.macro_overall.f1,
            Some(Stage::Structural) => report.macro_structural.f1,
            _ => report.macro_content.f1,
        };
        assert!((macro_f1.unwrap() - f1s.iter().sum::<f64>() / f1s.len() as f64).abs() < 1e-12);
    }
    assert_eq!(
        report.benign.total,
        test.iter()
            .filter(|t| t.label.as_deref() == Some("normal"))
            .count() as u64
    );
}

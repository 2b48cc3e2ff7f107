//! Two-stage detection on a baselined engine: structural validation, then
//! autoencoder scoring of the serialized content.
//!
//! cargo run --release -p apimap --example detect_attacks

use apimap::eval::generator::GeneratorConfig;
use apimap::eval::{default_templates, generate_corpus};
use apimap::{Engine, RawRequest};

fn main() -> apimap::Result<()> {
    let cfg = GeneratorConfig {
        benign_train: 4_000,
        benign_test: 0,
        attacks: Vec::new(),
        seed: 3,
    };
    let corpus = generate_corpus(&default_templates(), &cfg);
    let engine = Engine::default();
    for r in &corpus.train {
        engine.ingest(r);
    }
    let b = engine.baseline()?;
    println!(
        "baseline v{}: {} endpoints, threshold {:.4e}\n",
        b.schema_version, b.terminal_count, b.threshold
    );

    let known = corpus.train[0].clone();
    let mut body_attack = corpus
        .train
        .iter()
        .find(|r| r.method == "POST" && !r.body.is_empty())
        .cloned()
        .expect("templates include JSON bodies");
    let text = String::from_utf8_lossy(&body_attack.body).into_owned();
    let field = text.split('"').nth(3).unwrap_or_default().to_string();
    body_attack.body = text
        .replacen(
            &format!("\"{field}\""),
            "\"'; DROP TABLE users; -- union select password from accounts\"",
            1,
        )
        .into_bytes();

    let probes = [
        ("replayed training request", known),
        ("unknown root", RawRequest::new("GET", "/wp-login.php")),
        (
            "SQLi in an integer slot",
            RawRequest::new("GET", "/api/v1/products/1%20OR%201=1"),
        ),
        (
            "undocumented query key",
            RawRequest::new("GET", "/api/v1/search?q=lamp&page=1&debug=true"),
        ),
        (
            "undocumented method",
            RawRequest::new("TRACE", "/api/v1/search"),
        ),
        ("payload in a JSON body", body_attack),
    ];
    for (what, r) in &probes {
        let v = engine.classify_raw(r)?;
        let reason = v
            .reasons
            .first()
            .map(|x| format!("{} at {:?} ({:?})", x.code, x.location, x.token))
            .unwrap_or_default();
        println!("{what:<28} {:?}/{:?} {reason}", v.outcome, v.stage);
    }
    Ok(())
}

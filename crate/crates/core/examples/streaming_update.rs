//! Phase lifecycle: Training -> Detection, then Updating to fold in a new
//! endpoint while the old snapshot keeps its version, then reset.
//!
//! cargo run --release -p apimap --example streaming_update

use apimap::config::AeConfig;
use apimap::{Engine, EngineConfig, Phase, RawRequest};

fn traffic(prefix: &str, n: usize) -> Vec<RawRequest> {
    (0..n)
        .map(|i| {
            RawRequest::new("GET", format!("/{prefix}/{}?lang=en", 100 + i % 50))
                .header("Accept", "application/json")
        })
        .collect()
}

fn main() -> apimap::Result<()> {
    let engine = Engine::new(EngineConfig {
        ae: AeConfig {
            epochs: 5,
            ..AeConfig::default()
        },
        ..EngineConfig::default()
    });
    for r in traffic("articles", 400) {
        engine.ingest(&r);
    }
    engine.set_phase(Phase::Detection)?;
    let probe = RawRequest::new("GET", "/videos/123?lang=en").header("Accept", "application/json");
    let v = engine.classify_raw(&probe)?;
    println!(
        "{:?} v{:?}: /videos/123 is {:?} {:?}",
        engine.phase(),
        v.schema_version,
        v.outcome,
        v.primary_reason()
    );

    engine.set_phase(Phase::Updating)?;
    for r in traffic("videos", 200) {
        engine.ingest(&r);
    }
    println!(
        "{:?}: {} pending requests",
        engine.phase(),
        engine.stats().pending_updates
    );

    engine.set_phase(Phase::Detection)?;
    let v = engine.classify_raw(&probe)?;
    println!(
        "{:?} v{:?}: /videos/123 is {:?}",
        engine.phase(),
        v.schema_version,
        v.outcome
    );
    // ids were 100..149 during learning; far shorter ones break the length bounds
    let short = RawRequest::new("GET", "/videos/7?lang=en").header("Accept", "application/json");
    println!(
        "/videos/7 is {:?}",
        engine.classify_raw(&short)?.primary_reason()
    );
    print!("{}", engine.diff(1, 2)?.to_text());

    engine.reset();
    println!(
        "after reset: {:?}, {} tree nodes",
        engine.phase(),
        engine.tree().node_count()
    );
    Ok(())
}

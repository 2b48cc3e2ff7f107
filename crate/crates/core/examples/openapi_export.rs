//! Learn from generated traffic and print the inferred OpenAPI document.
//!
//! cargo run --release -p apimap --example openapi_export [out.json]

use apimap::eval::generator::GeneratorConfig;
use apimap::eval::{default_templates, generate_corpus};
use apimap::Engine;

fn main() -> apimap::Result<()> {
    let cfg = GeneratorConfig {
        benign_train: 2_000,
        benign_test: 0,
        attacks: Vec::new(),
        seed: 5,
    };
    let engine = Engine::default();
    for r in &generate_corpus(&default_templates(), &cfg).train {
        engine.ingest(r);
    }
    engine.baseline()?;
    let doc = engine.openapi()?;
    match std::env::args().nth(1) {
        Some(path) => {
            std::fs::write(&path, doc.to_json_pretty())?;
            eprintln!("{} paths written to {path}", doc.path_count());
        }
        None => println!("{}", doc.to_json_pretty()),
    }
    Ok(())
}

//! Generates a labeled corpus, trains on its benign half and prints the
//! per-tag report.
//!
//! cargo run --release -p apimap --example benchmark -- [url|body] [seed]

use apimap::eval::generator::GeneratorConfig;
use apimap::eval::{default_templates, generate_corpus, run_benchmark, BenchConfig, Placement};

fn main() -> apimap::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let placement = match args.first().map(String::as_str) {
        Some("body") | Some("body_header") => Placement::BodyHeaderEmbedded,
        _ => Placement::UrlEmbedded,
    };
    let seed = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(7);

    let corpus = generate_corpus(
        &default_templates(),
        &GeneratorConfig::standard(placement, seed),
    );
    let report = run_benchmark(&corpus, &BenchConfig::default())?;
    print!("{}", report.to_text());
    if let Some(b) = &report.baseline {
        println!(
            "\nthreshold {:.6e}, schema v{} with {} endpoints",
            b.threshold, b.schema_version, b.terminal_count
        );
    }
    Ok(())
}

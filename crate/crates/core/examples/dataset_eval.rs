//! Benchmark against a labeled dataset on disk (JSONL, CSIC 2010 CSV, or
//! ATRDF JSON). Benign records are split into train and test halves.
//!
//! cargo run --release -p apimap --example dataset_eval -- <path> [jsonl|csic|atrdf]

use apimap::eval::{load_dataset, run_benchmark, BenchConfig, DatasetFormat};

fn main() -> apimap::Result<()> {
    let mut args = std::env::args().skip(1);
    let Some(path) = args.next() else {
        eprintln!("usage: dataset_eval <path> [jsonl|csic|atrdf]");
        std::process::exit(2);
    };
    let format: DatasetFormat = args.next().as_deref().unwrap_or("jsonl").parse()?;
    let corpus = load_dataset(path.as_ref(), format)?;
    println!(
        "{} train, {} test records",
        corpus.train.len(),
        corpus.test.len()
    );
    let report = run_benchmark(&corpus, &BenchConfig::default())?;
    print!("{}", report.to_text());
    Ok(())
}

//! `apimap`: learn, baseline, classify, serve, bench, reset.
//!
//! Every subcommand except `bench` works on a JSON state file (default
//! `apimap-state.json`) that carries learned traffic, the active schema and
//! model, and schema history.

use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use apimap::eval::dataset::{load_dataset, DatasetFormat};
use apimap::eval::generator::GeneratorConfig;
use apimap::eval::metrics::evaluate;
use apimap::eval::{
    default_templates, generate_corpus, run_benchmark, BenchConfig, LabeledCorpus, Placement,
};
use apimap::{Engine, EngineConfig, IngestOutcome, Phase, RawRequest};
use apimap_gateway::AppState;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "apimap",
    version,
    about = "Learn API structure from traffic and flag anomalous requests"
)]
struct Cli {
    /// TOML engine configuration.
    #[arg(long, global = true, env = "APIMAP_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args)]
struct StateArg {
    #[arg(long, default_value = "apimap-state.json", env = "APIMAP_STATE")]
    state: PathBuf,
}

#[derive(Args)]
struct Emit {
    /// Write the learned tree snapshot as JSON.
    #[arg(long)]
    dump_tree: Option<PathBuf>,
    /// Write the active reduced schema as JSON.
    #[arg(long)]
    emit_schema: Option<PathBuf>,
    /// Write the OpenAPI document.
    #[arg(long)]
    emit_openapi: Option<PathBuf>,
    /// Write the trained autoencoder model.
    #[arg(long)]
    ae_model: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Jsonl,
    Csic,
    Atrdf,
}

impl From<Format> for DatasetFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Jsonl => DatasetFormat::Jsonl,
            Format::Csic => DatasetFormat::CsicCsv,
            Format::Atrdf => DatasetFormat::AtrdfJson,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Ingest JSONL request records into the learned tree.
    Learn {
        #[command(flatten)]
        state: StateArg,
        inputs: Vec<PathBuf>,
        /// Enter the Updating phase first (requires an existing baseline to matter).
        #[arg(long)]
        update: bool,
        /// Reduce the tree and train the autoencoder right after ingesting.
        #[arg(long)]
        train_ae: bool,
        #[command(flatten)]
        emit: Emit,
    },
    /// Reduce the learned tree, train and calibrate the autoencoder, enter Detection.
    Baseline {
        #[command(flatten)]
        state: StateArg,
        #[command(flatten)]
        emit: Emit,
    },
    /// Classify JSONL request records; prints one verdict per line.
    Classify {
        #[command(flatten)]
        state: StateArg,
        inputs: Vec<PathBuf>,
        /// Print the latency summary table to stderr afterwards.
        #[arg(long)]
        latency: bool,
    },
    /// Run the HTTP control plane.
    Serve {
        #[command(flatten)]
        state: StateArg,
        #[arg(long, env = "APIMAP_BIND", default_value = "127.0.0.1")]
        bind: std::net::IpAddr,
        #[arg(long, env = "APIMAP_PORT", default_value_t = 8080)]
        port: u16,
        /// Do not write the state file on shutdown.
        #[arg(long)]
        no_save: bool,
    },
    /// Precision/recall/F1 per attack tag and latency statistics.
    Bench {
        /// Generated corpus placement; ignored with --dataset.
        #[arg(long, value_enum, default_value = "url")]
        placement: PlacementArg,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Labeled dataset instead of the generator.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "jsonl")]
        format: Format,
        /// Also write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Clear learned traffic, schema, model and counters; keep configuration.
    Reset {
        #[command(flatten)]
        state: StateArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PlacementArg {
    Url,
    Body,
}

fn config(path: Option<&Path>) -> Result<EngineConfig> {
    match path {
        Some(p) => EngineConfig::load(p).with_context(|| format!("loading config {}", p.display())),
        None => Ok(EngineConfig::default()),
    }
}

fn open_engine(state: &Path, cfg: Option<&Path>) -> Result<Engine> {
    if !state.exists() {
        return Ok(Engine::new(config(cfg)?));
    }
    let engine = match cfg {
        Some(_) => Engine::load_state_with(state, config(cfg)?),
        None => Engine::load_state(state),
    };
    engine.with_context(|| format!("loading state {}", state.display()))
}

fn read_records(inputs: &[PathBuf]) -> Result<Vec<RawRequest>> {
    let mut out = Vec::new();
    if inputs.is_empty() {
        let text = std::io::read_to_string(std::io::stdin())?;
        parse_lines(&text, "<stdin>", &mut out)?;
    }
    for p in inputs {
        let text =
            std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        parse_lines(&text, &p.display().to_string(), &mut out)?;
    }
    Ok(out)
}

fn parse_lines(text: &str, name: &str, out: &mut Vec<RawRequest>) -> Result<()> {
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(RawRequest::from_json_line(line).with_context(|| format!("{name}:{}", i + 1))?);
    }
    Ok(())
}

fn emit(engine: &Engine, e: &Emit) -> Result<()> {
    if let Some(p) = &e.dump_tree {
        std::fs::write(p, engine.tree_snapshot().to_json_pretty())?;
    }
    if let Some(p) = &e.emit_schema {
        let Some(s) = engine.schema() else {
            bail!("--emit-schema: no schema yet, run a baseline first");
        };
        std::fs::write(p, serde_json::to_string_pretty(&s.view())?)?;
    }
    if let Some(p) = &e.emit_openapi {
        std::fs::write(p, engine.openapi()?.to_json_pretty())?;
    }
    if let Some(p) = &e.ae_model {
        let Some(snap) = engine.snapshot() else {
            bail!("--ae-model: no trained model yet, run a baseline first");
        };
        snap.model.save(p)?;
    }
    Ok(())
}

fn print_baseline(engine: &Engine) -> Result<()> {
    let r = engine.baseline()?;
    eprintln!(
        "schema v{}: {} nodes, {} endpoints; autoencoder on {} requests, threshold {:.6e} ({:.1}s)",
        r.schema_version,
        r.node_count,
        r.terminal_count,
        r.training_requests,
        r.threshold,
        r.seconds
    );
    for w in &r.warnings {
        eprintln!("warning: {w:?}");
    }
    Ok(())
}

async fn shutdown_signal() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        let mut term = signal(SignalKind::terminate()).expect("install SIGTERM handler");
        tokio::select! {
            _ = tokio::signal::ctrl_c() => {}
            _ = term.recv() => {}
        }
    }
    #[cfg(not(unix))]
    let _ = tokio::signal::ctrl_c().await;
    tracing::info!("shutting down");
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| "info,tower_http=info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let cfg = cli.config.as_deref();
    match cli.cmd {
        Command::Learn {
            state,
            inputs,
            update,
            train_ae,
            emit: em,
        } => {
            let engine = open_engine(&state.state, cfg)?;
            if update {
                engine.set_phase(Phase::Updating)?;
            } else if engine.phase() == Phase::Detection {
                bail!("engine is in Detection; pass --update to add traffic or run `apimap reset`");
            }
            let records = read_records(&inputs)?;
            let mut learned = 0usize;
            let mut malformed = 0usize;
            for r in &records {
                match engine.ingest(r) {
                    IngestOutcome::Learned => learned += 1,
                    IngestOutcome::Verdict(_) => malformed += 1,
                }
            }
            eprintln!(
                "learned {learned} requests ({malformed} malformed skipped); tree has {} nodes",
                engine.tree().node_count()
            );
            if train_ae {
                print_baseline(&engine)?;
            }
            emit(&engine, &em)?;
            engine.save_state(&state.state)?;
        }
        Command::Baseline { state, emit: em } => {
            let engine = open_engine(&state.state, cfg)?;
            print_baseline(&engine)?;
            emit(&engine, &em)?;
            engine.save_state(&state.state)?;
        }
        Command::Classify {
            state,
            inputs,
            latency,
        } => {
            let engine = open_engine(&state.state, cfg)?;
            if engine.phase() != Phase::Detection {
                bail!(
                    "engine is in {}; run `apimap baseline` first",
                    engine.phase()
                );
            }
            let records = read_records(&inputs)?;
            let mut out = BufWriter::new(std::io::stdout().lock());
            let mut anomalous = 0usize;
            for r in &records {
                let v = engine.classify_raw(r)?;
                anomalous += usize::from(v.is_anomalous());
                serde_json::to_writer(&mut out, &v)?;
                out.write_all(b"\n")?;
            }
            out.flush()?;
            eprintln!("{} classified, {anomalous} anomalous", records.len());
            if latency {
                eprint!("{}", engine.stats().latency.to_table());
            }
        }
        Command::Serve {
            state,
            bind,
            port,
            no_save,
        } => {
            let engine = open_engine(&state.state, cfg)?;
            let app = AppState::new(engine);
            let rt = tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()?;
            rt.block_on(apimap_gateway::serve(
                app.clone(),
                SocketAddr::new(bind, port),
                shutdown_signal(),
            ))?;
            if !no_save {
                app.engine.save_state(&state.state)?;
                eprintln!("state written to {}", state.state.display());
            }
        }
        Command::Bench {
            placement,
            seed,
            dataset,
            format,
            json,
        } => {
            let bench = BenchConfig {
                engine: config(cfg)?,
            };
            let report = match dataset {
                Some(p) => {
                    let corpus: LabeledCorpus = load_dataset(&p, format.into())?;
                    let engine = Engine::new(bench.engine.clone());
                    for r in &corpus.train {
                        engine.ingest(r);
                    }
                    let b = engine.baseline()?;
                    let (mut report, secs) = evaluate(&engine, &corpus.test)?;
                    report.train_requests = corpus.train.len();
                    report.baseline = Some(b);
                    report.classify_seconds = secs;
                    report
                }
                None => {
                    let placement = match placement {
                        PlacementArg::Url => Placement::UrlEmbedded,
                        PlacementArg::Body => Placement::BodyHeaderEmbedded,
                    };
                    let corpus = generate_corpus(
                        &default_templates(),
                        &GeneratorConfig::standard(placement, seed),
                    );
                    run_benchmark(&corpus, &bench)?
                }
            };
            print!("{}", report.to_text());
            if let Some(p) = json {
                std::fs::write(p, report.to_json_pretty())?;
            }
        }
        Command::Reset { state } => {
            let engine = open_engine(&state.state, cfg)?;
            engine.reset();
            engine.save_state(&state.state)?;
            eprintln!("reset; state written to {}", state.state.display());
        }
    }
    Ok(())
}

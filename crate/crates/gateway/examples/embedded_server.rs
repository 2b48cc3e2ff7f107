//! Serve the control plane from inside another program, pre-trained on
//! generated traffic, and stream anomalies from a second task.
//!
//! cargo run --release -p apimap-gateway --example embedded_server
//! then: curl -N localhost:8099/events   and   curl localhost:8099/openapi.json

use std::net::SocketAddr;

use apimap::eval::generator::GeneratorConfig;
use apimap::eval::{default_templates, generate_corpus};
use apimap::Engine;
use apimap_gateway::{serve, AppState};

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt().with_env_filter("info").init();
    let engine = Engine::default();
    let cfg = GeneratorConfig {
        benign_train: 2_000,
        benign_test: 0,
        attacks: Vec::new(),
        seed: 9,
    };
    for r in &generate_corpus(&default_templates(), &cfg).train {
        engine.ingest(r);
    }
    let b = engine.baseline()?;
    tracing::info!(
        version = b.schema_version,
        endpoints = b.terminal_count,
        "ready"
    );

    let state = AppState::new(engine);
    let addr: SocketAddr = ([127, 0, 0, 1], 8099).into();
    serve(state, addr, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await?;
    Ok(())
}

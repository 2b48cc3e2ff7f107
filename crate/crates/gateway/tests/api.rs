use std::sync::Arc;
use std::time::Duration;

use apimap::config::AeConfig;
use apimap::eval::generator::GeneratorConfig;
use apimap::eval::{default_templates, generate_corpus};
use apimap::{Engine, EngineConfig, RawRequest};
use apimap_gateway::{router, AppState, StreamLine, EVENT_BUFFER};
use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn quick_config() -> EngineConfig {
    EngineConfig {
        ae: AeConfig {
            epochs: 2,
            batch_size: 32,
            ..AeConfig::default()
        },
        ..EngineConfig::default()
    }
}

fn app() -> Arc<AppState> {
    AppState::new(Engine::new(quick_config()))
}

fn benign(n: usize, seed: u64) -> Vec<RawRequest> {
    let cfg = GeneratorConfig {
        benign_train: n,
        benign_test: 0,
        attacks: Vec::new(),
        seed,
    };
    generate_corpus(&default_templates(), &cfg).train
}

fn jsonl(rs: &[RawRequest]) -> String {
    rs.iter().map(|r| r.to_json_line() + "\n").collect()
}

async fn call(
    st: &Arc<AppState>,
    method: &str,
    uri: &str,
    body: impl Into<Body>,
) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = req
        .header("content-type", "application/json")
        .body(body.into())
        .unwrap();
    let resp = router(st.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = serde_json::from_slice(&bytes)
        .unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()));
    (status, v)
}

async fn get(st: &Arc<AppState>, uri: &str) -> (StatusCode, Value) {
    call(st, "GET", uri, Body::empty()).await
}

async fn post(st: &Arc<AppState>, uri: &str, body: impl Into<Body>) -> (StatusCode, Value) {
    call(st, "POST", uri, body).await
}

async fn trained(n: usize) -> Arc<AppState> {
    let st = app();
    let (s, _) = post(&st, "/ingest", jsonl(&benign(n, 1))).await;
    assert_eq!(s, StatusCode::OK);
    let (s, v) = post(&st, "/phase", json!({"target": "detection"}).to_string()).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["phase"], "detection");
    st
}

fn attack(i: usize) -> RawRequest {
    RawRequest::new("GET", format!("/wp-admin/probe{i}.php"))
}

#[tokio::test]
async fn openapi_before_baseline_is_conflict() {
    let st = app();
    let (s, v) = get(&st, "/openapi.json").await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["phase"], "training");
    assert!(v["error"].as_str().unwrap().contains("baseline"));
    let (s, _) = get(&st, "/schema").await;
    assert_eq!(s, StatusCode::CONFLICT);
}

#[tokio::test]
async fn ingest_counts_in_training() {
    let st = app();
    let (s, v) = post(&st, "/ingest", jsonl(&benign(100, 2))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["ingested"], 100);
    assert_eq!(v["learned"], 100);
    let (_, stats) = get(&st, "/stats").await;
    assert_eq!(stats["ingested"], 100);
    assert_eq!(stats["phase"], "training");
    assert_eq!(stats["events_dropped"], 0);
}

#[tokio::test]
async fn single_record_ingest() {
    let st = app();
    let (s, v) = post(
        &st,
        "/ingest",
        RawRequest::new("GET", "/a/1").to_json_line(),
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["outcomes"][0]["kind"], "learned");
}

#[tokio::test]
async fn bad_line_rejects_whole_batch() {
    let st = app();
    let body = format!(
        "{}\nnot json\n",
        RawRequest::new("GET", "/a").to_json_line()
    );
    let (s, v) = post(&st, "/ingest", body).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert!(v["error"].as_str().unwrap().starts_with("line 2"));
    let (_, stats) = get(&st, "/stats").await;
    assert_eq!(stats["ingested"], 0);
}

#[tokio::test]
async fn reset_empties_tree_and_is_idempotent() {
    let st = app();
    post(&st, "/ingest", jsonl(&benign(50, 3))).await;
    let (_, tree) = get(&st, "/tree").await;
    assert!(!tree["children"].as_array().unwrap().is_empty());

    let (s, v) = post(&st, "/reset", Body::empty()).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["phase"], "training");
    let (_, tree1) = get(&st, "/tree").await;
    let (_, stats1) = get(&st, "/stats").await;
    post(&st, "/reset", Body::empty()).await;
    let (_, tree2) = get(&st, "/tree").await;
    let (_, stats2) = get(&st, "/stats").await;
    assert_eq!(tree1["children"], json!([]));
    assert_eq!(tree1, tree2);
    assert_eq!(stats1, stats2);
}

#[tokio::test]
async fn baseline_with_too_little_data_keeps_phase() {
    let st = app();
    post(&st, "/ingest", jsonl(&benign(5, 4))).await;
    let (s, v) = post(&st, "/baseline", Body::empty()).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["phase"], "training");
    let (_, stats) = get(&st, "/stats").await;
    assert_eq!(stats["phase"], "training");
}

#[tokio::test]
async fn detection_flow() {
    let st = trained(300).await;
    let (s, schema) = get(&st, "/schema").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(schema["version"], 1);
    let (s, doc) = get(&st, "/openapi.json").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(doc["openapi"], "3.0.3");
    assert!(!doc["paths"].as_object().unwrap().is_empty());

    let replay = benign(300, 1);
    let (_, v) = post(&st, "/ingest", jsonl(&replay)).await;
    assert_eq!(v["anomalous"], 0, "training replay must be accepted");

    let (_, v) = post(&st, "/ingest", attack(0).to_json_line()).await;
    assert_eq!(v["anomalous"], 1);
    assert_eq!(v["outcomes"][0]["kind"], "verdict");
    assert_eq!(v["outcomes"][0]["outcome"], "anomalous");
    assert_eq!(v["outcomes"][0]["reasons"][0]["code"], "UnknownRootPath");

    let (_, stats) = get(&st, "/stats").await;
    assert_eq!(stats["classified"], 301);
    assert_eq!(stats["anomalous"], 1);
    assert_eq!(stats["latency"]["count"], 301);
}

#[tokio::test]
async fn events_arrive_in_order_with_heartbeats() {
    let st = AppState::with_heartbeat(Engine::new(quick_config()), Duration::from_millis(50));
    post(&st, "/ingest", jsonl(&benign(200, 5))).await;
    post(&st, "/baseline", Body::empty()).await;

    let resp = router(st.clone())
        .oneshot(Request::get("/events").body(Body::empty()).unwrap())
        .await
        .unwrap();
    assert_eq!(resp.headers()["content-type"], "application/x-ndjson");
    let mut body = resp.into_body();

    let attacks: Vec<RawRequest> = (0..50).map(attack).collect();
    post(&st, "/ingest", jsonl(&attacks)).await;

    let mut buf = Vec::new();
    let mut events = Vec::new();
    let mut heartbeats = 0;
    while events.len() < 50 || heartbeats == 0 {
        let frame = tokio::time::timeout(Duration::from_secs(5), body.frame())
            .await
            .expect("stream stalled")
            .unwrap()
            .unwrap();
        buf.extend_from_slice(&frame.into_data().unwrap());
        while let Some(nl) = buf.iter().position(|&b| b == b'\n') {
            let line: Vec<u8> = buf.drain(..=nl).collect();
            match serde_json::from_slice::<StreamLine>(&line).unwrap() {
                StreamLine::Anomaly(ev) => events.push(ev),
                StreamLine::Heartbeat => heartbeats += 1,
            }
        }
    }
    let seqs: Vec<u64> = events.iter().map(|e| e.seq).collect();
    assert_eq!(seqs, (1..=50).collect::<Vec<_>>());
    for (i, ev) in events.iter().enumerate() {
        assert_eq!(ev.url, format!("/wp-admin/probe{i}.php"));
    }

    st.close_streams();
    let end = tokio::time::timeout(Duration::from_secs(5), async {
        loop {
            match body.frame().await {
                None => break,
                Some(_) => continue,
            }
        }
    })
    .await;
    assert!(end.is_ok(), "stream did not end on shutdown");
}

#[tokio::test]
async fn slow_subscriber_drops_are_counted() {
    let st = AppState::with_heartbeat(Engine::new(quick_config()), Duration::from_secs(3600));
    post(&st, "/ingest", jsonl(&benign(200, 6))).await;
    post(&st, "/baseline", Body::empty()).await;
    let resp = router(st.clone())
        .oneshot(Request::get("/events").body(Body::empty()).unwrap())
        .await
        .unwrap();
    let mut body = resp.into_body();
    let extra = 76;
    let attacks: Vec<RawRequest> = (0..EVENT_BUFFER + extra).map(attack).collect();
    post(&st, "/ingest", jsonl(&attacks)).await;

    let frame = body.frame().await.unwrap().unwrap().into_data().unwrap();
    let first: StreamLine = serde_json::from_slice(&frame[..frame.len() - 1]).unwrap();
    match first {
        StreamLine::Anomaly(ev) => {
            assert_eq!(ev.seq, extra as u64 + 1, "oldest events are dropped first")
        }
        StreamLine::Heartbeat => panic!("expected an event"),
    }
    let (_, stats) = get(&st, "/stats").await;
    assert_eq!(stats["events_dropped"], extra as u64);
}

#[tokio::test]
async fn diff_between_versions() {
    let st = trained(300).await;
    let (s, v) = post(&st, "/phase", json!({"target": "updating"}).to_string()).await;
    assert_eq!((s, v["phase"].as_str()), (StatusCode::OK, Some("updating")));
    let new: Vec<RawRequest> = (0..5)
        .map(|i| RawRequest::new("GET", format!("/reports/daily?day={i}")))
        .collect();
    post(&st, "/ingest", jsonl(&new)).await;
    let (s, v) = post(&st, "/phase", json!({"target": "detection"}).to_string()).await;
    assert_eq!(s, StatusCode::OK, "{v}");

    let (s, d) = get(&st, "/diff?from=1&to=2").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(d["from_version"], 1);
    assert_eq!(d["to_version"], 2);
    assert!(
        d["added_paths"]
            .as_array()
            .unwrap()
            .iter()
            .any(|p| p == "/reports/daily"),
        "{d}"
    );
    let (s, text) = get(&st, "/diff?from=1&to=2&format=text").await;
    assert_eq!(s, StatusCode::OK);
    assert!(text.as_str().unwrap().contains("/reports/daily"));
    let (s, _) = get(&st, "/diff?from=1&to=9").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, old) = get(&st, "/schema?version=1").await;
    assert_eq!((s, &old["version"]), (StatusCode::OK, &json!(1)));
}

#[tokio::test]
async fn unknown_phase_target_is_rejected() {
    let st = app();
    let (s, _) = post(&st, "/phase", json!({"target": "sleeping"}).to_string()).await;
    assert!(s.is_client_error());
}

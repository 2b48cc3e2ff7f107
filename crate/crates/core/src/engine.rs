//! Three-phase lifecycle and the two-stage detection pipeline.
//!
//! `Training` and `Updating` learn traffic; `baseline` freezes a copy of
//! everything learned into a [`Snapshot`] (reduced schema, validation graph,
//! autoencoder with threshold) and switches to `Detection`. Snapshots are
//! immutable and swapped behind an `Arc`, so a classification sees exactly one
//! schema version.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::autoencoder::{calibrate_threshold_at, train, AEModel, AEThreshold, TrainWarning};
use crate::config::EngineConfig;
use crate::error::{Error, Result};
use crate::graph::{build_graph, validate, SchemaGraph, TolerancePolicy};
use crate::hashing::{hash_text, FeatureVector};
use crate::openapi::{diff_specs, generate_spec, OpenApiDoc, SchemaDiff};
use crate::reducer::{reduce_tree_with, ReducedSchema};
use crate::request::{parse_request, serialize_for_content, ParsedRequest, RawRequest};
use crate::stats::LatencySummary;
use crate::tree::{ApiTree, TreeSnapshot};
use crate::verdict::{Reason, ReasonCode, Stage, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Training,
    Updating,
    Detection,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Training => "training",
            Phase::Updating => "updating",
            Phase::Detection => "detection",
        }
    }
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "training" => Ok(Phase::Training),
            "updating" => Ok(Phase::Updating),
            "detection" => Ok(Phase::Detection),
            other => Err(Error::Config(format!("unknown phase {other:?}"))),
        }
    }
}

/// Everything classification needs, frozen at baseline time.
#[derive(Debug)]
pub struct Snapshot {
    pub schema: ReducedSchema,
    pub graph: SchemaGraph,
    pub model: AEModel,
    pub policy: TolerancePolicy,
    pub body_limit: usize,
}

impl Snapshot {
    pub fn new(schema: ReducedSchema, model: AEModel, config: &EngineConfig) -> Self {
        Self {
            graph: build_graph(&schema),
            schema,
            model,
            policy: config.tolerance(),
            body_limit: config.body_limit,
        }
    }

    pub fn version(&self) -> u64 {
        self.schema.version
    }

    pub fn threshold(&self) -> Option<&AEThreshold> {
        self.model.threshold.as_ref()
    }

    /// Structural validation, then content scoring if the structure passes.
    pub fn classify(&self, req: &ParsedRequest) -> Verdict {
        let mut v = validate(&self.graph, req, &self.policy);
        if !v.is_anomalous() {
            let content = serialize_for_content(req, self.body_limit);
            let x = hash_text(&content.text, self.model.hash_seed);
            let r = self.model.score(&x);
            v.score = Some(r.score);
            if r.flagged {
                let mut a = Verdict::anomalous(
                    Stage::Content,
                    Reason {
                        code: ReasonCode::ContentReconstructionError,
                        location: req.normalized_path(),
                        token: format!("{:.6e}", r.score),
                    },
                );
                a.score = Some(r.score);
                v = a;
            }
        }
        v.schema_version = Some(self.version());
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IngestOutcome {
    Learned,
    Verdict(Verdict),
}

impl IngestOutcome {
    pub fn verdict(&self) -> Option<&Verdict> {
        match self {
            IngestOutcome::Verdict(v) => Some(v),
            IngestOutcome::Learned => None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct Learning {
    tree: ApiTree,
    /// Serialized content of every learned request, in arrival order.
    corpus: Vec<String>,
    delta: ApiTree,
    delta_corpus: Vec<String>,
}

impl Learning {
    fn new(example_cap: usize) -> Self {
        Self {
            tree: ApiTree::new(example_cap),
            delta: ApiTree::new(example_cap),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub schema_version: u64,
    pub node_count: usize,
    pub terminal_count: usize,
    pub training_requests: usize,
    pub threshold: f64,
    pub epoch_losses: Vec<f64>,
    pub warnings: Vec<TrainWarning>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineStats {
    pub phase: Phase,
    pub schema_version: Option<u64>,
    pub ingested: u64,
    pub learned: u64,
    pub classified: u64,
    pub accepted: u64,
    pub anomalous: u64,
    pub by_reason: BTreeMap<ReasonCode, u64>,
    pub tree_nodes: usize,
    pub pending_updates: u64,
    pub latency: LatencySummary,
}

#[derive(Default)]
struct Counters {
    ingested: AtomicU64,
    learned: AtomicU64,
    classified: AtomicU64,
    accepted: AtomicU64,
    anomalous: AtomicU64,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

pub struct Engine {
    config: EngineConfig,
    phase: RwLock<Phase>,
    learning: Mutex<Learning>,
    snapshot: RwLock<Option<Arc<Snapshot>>>,
    history: Mutex<Vec<ReducedSchema>>,
    counters: Counters,
    by_reason: Mutex<BTreeMap<ReasonCode, u64>>,
    latencies: Mutex<VecDeque<f64>>,
    /// Serializes baseline and reset.
    exclusive: Mutex<()>,
}

impl Default for Engine {
    fn default() -> Self {
        Self::new(EngineConfig::default())
    }
}

impl Engine {
    pub fn new(config: EngineConfig) -> Self {
        Self {
            learning: Mutex::new(Learning::new(config.example_cap)),
            config,
            phase: RwLock::new(Phase::Training),
            snapshot: RwLock::new(None),
            history: Mutex::new(Vec::new()),
            counters: Counters::default(),
            by_reason: Mutex::new(BTreeMap::new()),
            latencies: Mutex::new(VecDeque::new()),
            exclusive: Mutex::new(()),
        }
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn phase(&self) -> Phase {
        *self.phase.read().unwrap_or_else(|e| e.into_inner())
    }

    fn set_phase_raw(&self, p: Phase) {
        *self.phase.write().unwrap_or_else(|e| e.into_inner()) = p;
    }

    pub fn snapshot(&self) -> Option<Arc<Snapshot>> {
        self.snapshot
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .clone()
    }

    /// The active reduced schema, if a baseline has run.
    pub fn schema(&self) -> Option<ReducedSchema> {
        self.snapshot().map(|s| s.schema.clone())
    }

    /// Learned traffic, including updates not yet folded into the schema.
    pub fn tree(&self) -> ApiTree {
        let l = lock(&self.learning);
        let mut t = l.tree.clone();
        t.merge(&l.delta);
        t
    }

    pub fn tree_snapshot(&self) -> TreeSnapshot {
        self.tree().snapshot()
    }

    pub fn openapi(&self) -> Result<OpenApiDoc> {
        let snap = self.snapshot().ok_or(Error::Phase {
            expected: Phase::Detection,
            actual: self.phase(),
        })?;
        Ok(generate_spec(&snap.schema))
    }

    pub fn versions(&self) -> Vec<u64> {
        lock(&self.history).iter().map(|s| s.version).collect()
    }

    pub fn schema_version(&self, version: u64) -> Result<ReducedSchema> {
        lock(&self.history)
            .iter()
            .find(|s| s.version == version)
            .cloned()
            .ok_or(Error::UnknownVersion(version))
    }

    pub fn diff(&self, from: u64, to: u64) -> Result<SchemaDiff> {
        Ok(diff_specs(
            &self.schema_version(from)?,
            &self.schema_version(to)?,
        ))
    }

    /// Learns the request in Training/Updating, classifies it in Detection.
    /// Unparseable URLs yield a `MalformedUrl` verdict in every phase.
    pub fn ingest(&self, raw: &RawRequest) -> IngestOutcome {
        self.counters.ingested.fetch_add(1, Ordering::Relaxed);
        let req = match parse_request(raw) {
            Ok(r) => r,
            Err(e) => {
                let v = self.malformed(raw, e);
                self.count_verdict(&v);
                return IngestOutcome::Verdict(v);
            }
        };
        {
            let mut l = lock(&self.learning);
            let phase = self.phase();
            if phase != Phase::Detection {
                let text = serialize_for_content(&req, self.config.body_limit).text;
                if phase == Phase::Training {
                    l.tree.insert_request(&req);
                    l.corpus.push(text);
                } else {
                    l.delta.insert_request(&req);
                    l.delta_corpus.push(text);
                }
                self.counters.learned.fetch_add(1, Ordering::Relaxed);
                return IngestOutcome::Learned;
            }
        }
        match self.classify(&req) {
            Ok(v) => IngestOutcome::Verdict(v),
            // phase changed underneath us; treat as learned-nothing
            Err(_) => IngestOutcome::Learned,
        }
    }

    fn malformed(&self, raw: &RawRequest, e: Error) -> Verdict {
        let token = match e {
            Error::MalformedUrl { offset, detail } => format!("{detail} at byte {offset}"),
            other => other.to_string(),
        };
        let mut v = Verdict::anomalous(
            Stage::Structural,
            Reason {
                code: ReasonCode::MalformedUrl,
                location: raw.url.clone(),
                token,
            },
        );
        v.schema_version = self.snapshot().map(|s| s.version());
        v.blocked = self.config.inline_blocking;
        v
    }

    /// Parses and classifies; malformed URLs become verdicts.
    pub fn classify_raw(&self, raw: &RawRequest) -> Result<Verdict> {
        match parse_request(raw) {
            Ok(req) => self.classify(&req),
            Err(e) => {
                let phase = self.phase();
                if phase != Phase::Detection {
                    return Err(Error::Phase {
                        expected: Phase::Detection,
                        actual: phase,
                    });
                }
                let v = self.malformed(raw, e);
                self.count_verdict(&v);
                Ok(v)
            }
        }
    }

    pub fn classify(&self, req: &ParsedRequest) -> Result<Verdict> {
        let phase = self.phase();
        let snap = match (phase, self.snapshot()) {
            (Phase::Detection, Some(s)) => s,
            _ => {
                return Err(Error::Phase {
                    expected: Phase::Detection,
                    actual: phase,
                })
            }
        };
        let start = Instant::now();
        let mut v = snap.classify(req);
        let elapsed = start.elapsed().as_secs_f64();
        v.blocked = self.config.inline_blocking && v.is_anomalous();
        self.count_verdict(&v);
        let mut lat = lock(&self.latencies);
        if lat.len() >= self.config.latency_window.max(1) {
            lat.pop_front();
        }
        lat.push_back(elapsed);
        Ok(v)
    }

    fn count_verdict(&self, v: &Verdict) {
        self.counters.classified.fetch_add(1, Ordering::Relaxed);
        if v.is_anomalous() {
            self.counters.anomalous.fetch_add(1, Ordering::Relaxed);
            if let Some(code) = v.primary_reason() {
                *lock(&self.by_reason).entry(code).or_default() += 1;
            }
        } else {
            self.counters.accepted.fetch_add(1, Ordering::Relaxed);
        }
    }

    /// Reduces everything learned so far, trains and calibrates the
    /// autoencoder on the same requests, installs the snapshot and enters
    /// Detection. Ingestion continues during the computation, which runs on
    /// a frozen copy.
    pub fn baseline(&self) -> Result<BaselineReport> {
        let _x = lock(&self.exclusive);
        let start = Instant::now();
        let (tree, corpus) = {
            let mut l = lock(&self.learning);
            let delta = std::mem::replace(&mut l.delta, ApiTree::new(self.config.example_cap));
            l.tree.merge(&delta);
            let dc = std::mem::take(&mut l.delta_corpus);
            l.corpus.extend(dc);
            (l.tree.clone(), l.corpus.clone())
        };
        if tree.is_empty() {
            return Err(Error::InsufficientData("no requests learned".into()));
        }
        let tc = self.config.train_config();
        if corpus.len() < tc.batch_size {
            return Err(Error::InsufficientData(format!(
                "autoencoder needs at least {} requests, have {}",
                tc.batch_size,
                corpus.len()
            )));
        }

        let mut schema = reduce_tree_with(&tree, &self.config.reduce_config());
        schema.version = self.next_version();

        let vectors: Vec<FeatureVector> = corpus
            .iter()
            .map(|t| hash_text(t, self.config.hash_seed))
            .collect();
        let report = train(&vectors, &tc)?;
        let mut model = report.model;
        model.hash_seed = self.config.hash_seed;
        let scores: Vec<f64> = vectors.iter().map(|x| model.score(x).score).collect();
        let threshold = calibrate_threshold_at(&scores, self.config.threshold_percentile);
        model.threshold = Some(threshold.clone());

        let snap = Snapshot::new(schema.clone(), model, &self.config);
        let out = BaselineReport {
            schema_version: schema.version,
            node_count: schema.node_count(),
            terminal_count: schema.terminal_count(),
            training_requests: corpus.len(),
            threshold: threshold.value,
            epoch_losses: report.epoch_losses,
            warnings: report.warnings,
            seconds: start.elapsed().as_secs_f64(),
        };
        lock(&self.history).push(schema);
        *self.snapshot.write().unwrap_or_else(|e| e.into_inner()) = Some(Arc::new(snap));
        self.set_phase_raw(Phase::Detection);
        tracing::info!(
            version = out.schema_version,
            nodes = out.node_count,
            "baseline installed"
        );
        Ok(out)
    }

    fn next_version(&self) -> u64 {
        lock(&self.history).last().map_or(1, |s| s.version + 1)
    }

    /// Moves to `target`. Detection from Training/Updating runs a baseline
    /// (or just switches back if nothing new was learned); Training resets.
    pub fn set_phase(&self, target: Phase) -> Result<Phase> {
        let current = self.phase();
        match (current, target) {
            (a, b) if a == b => {}
            (_, Phase::Training) => self.reset(),
            (Phase::Training, Phase::Updating) | (Phase::Detection, Phase::Updating) => {
                self.set_phase_raw(Phase::Updating)
            }
            (Phase::Updating, Phase::Detection) => {
                let pending = !lock(&self.learning).delta.is_empty();
                if pending || self.snapshot().is_none() {
                    self.baseline()?;
                } else {
                    self.set_phase_raw(Phase::Detection);
                }
            }
            (Phase::Training, Phase::Detection) => {
                self.baseline()?;
            }
            (_, _) => unreachable!("all phase pairs are covered"),
        }
        Ok(self.phase())
    }

    /// Clears learned traffic, the snapshot and all counters. Configuration
    /// is kept, and schema history too when `archive_history` is set.
    pub fn reset(&self) {
        let _x = lock(&self.exclusive);
        self.set_phase_raw(Phase::Training);
        *lock(&self.learning) = Learning::new(self.config.example_cap);
        *self.snapshot.write().unwrap_or_else(|e| e.into_inner()) = None;
        if !self.config.archive_history {
            lock(&self.history).clear();
        }
        for c in [
            &self.counters.ingested,
            &self.counters.learned,
            &self.counters.classified,
            &self.counters.accepted,
            &self.counters.anomalous,
        ] {
            c.store(0, Ordering::Relaxed);
        }
        lock(&self.by_reason).clear();
        lock(&self.latencies).clear();
    }

    pub fn latency_samples(&self) -> Vec<f64> {
        lock(&self.latencies).iter().copied().collect()
    }

    pub fn stats(&self) -> EngineStats {
        let (tree_nodes, pending) = {
            let l = lock(&self.learning);
            (l.tree.node_count(), l.delta.total_requests)
        };
        EngineStats {
            phase: self.phase(),
            schema_version: self.snapshot().map(|s| s.version()),
            ingested: self.counters.ingested.load(Ordering::Relaxed),
            learned: self.counters.learned.load(Ordering::Relaxed),
            classified: self.counters.classified.load(Ordering::Relaxed),
            accepted: self.counters.accepted.load(Ordering::Relaxed),
            anomalous: self.counters.anomalous.load(Ordering::Relaxed),
            by_reason: lock(&self.by_reason).clone(),
            tree_nodes,
            pending_updates: pending,
            latency: LatencySummary::from_samples(&self.latency_samples()),
        }
    }

    /// Writes learned traffic, the active schema and model, and schema history.
    pub fn save_state(&self, path: &Path) -> Result<()> {
        let snap = self.snapshot();
        let state = PersistedState {
            config: self.config.clone(),
            phase: self.phase(),
            learning: lock(&self.learning).clone(),
            schema: snap.as_ref().map(|s| s.schema.clone()),
            model: snap.as_ref().map(|s| s.model.clone()),
            history: lock(&self.history).clone(),
        };
        std::fs::write(path, serde_json::to_vec(&state)?)?;
        Ok(())
    }

    pub fn load_state(path: &Path) -> Result<Self> {
        let state: PersistedState = serde_json::from_slice(&std::fs::read(path)?)?;
        Self::from_state(state, None)
    }

    /// Like [`Self::load_state`] but with a replacement configuration.
    pub fn load_state_with(path: &Path, config: EngineConfig) -> Result<Self> {
        let state: PersistedState = serde_json::from_slice(&std::fs::read(path)?)?;
        Self::from_state(state, Some(config))
    }

    fn from_state(state: PersistedState, config: Option<EngineConfig>) -> Result<Self> {
        let engine = Self::new(config.unwrap_or(state.config));
        *lock(&engine.learning) = state.learning;
        *lock(&engine.history) = state.history;
        if let (Some(schema), Some(model)) = (state.schema, state.model) {
            let snap = Snapshot::new(schema, model, &engine.config);
            *engine.snapshot.write().unwrap_or_else(|e| e.into_inner()) = Some(Arc::new(snap));
        }
        let phase = match state.phase {
            Phase::Detection if engine.snapshot().is_none() => Phase::Training,
            p => p,
        };
        engine.set_phase_raw(phase);
        Ok(engine)
    }
}

#[derive(Serialize, Deserialize)]
struct PersistedState {
    config: EngineConfig,
    phase: Phase,
    learning: Learning,
    schema: Option<ReducedSchema>,
    model: Option<AEModel>,
    history: Vec<ReducedSchema>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> EngineConfig {
        let mut c = EngineConfig::default();
        c.ae.batch_size = 16;
        c.ae.epochs = 2;
        c
    }

    fn learn_users(e: &Engine, n: usize) {
        for i in 0..n {
            e.ingest(
                &RawRequest::new("GET", format!("/user/{i}/orders"))
                    .header("accept", "application/json"),
            );
        }
    }

    #[test]
    fn training_ingest_learns_without_verdicts() {
        let e = Engine::new(small_config());
        assert_eq!(
            e.ingest(&RawRequest::new("GET", "/a")),
            IngestOutcome::Learned
        );
        assert_eq!(e.tree().node_count(), 2);
        assert!(matches!(
            e.classify(&ParsedRequest::default()),
            Err(Error::Phase {
                actual: Phase::Training,
                ..
            })
        ));
    }

    #[test]
    fn baseline_needs_a_batch() {
        let e = Engine::default();
        e.ingest(&RawRequest::new("GET", "/a"));
        assert!(matches!(e.baseline(), Err(Error::InsufficientData(_))));
        assert_eq!(e.phase(), Phase::Training);
    }

    #[test]
    fn detection_verdicts() {
        let e = Engine::new(small_config());
        learn_users(&e, 40);
        let r = e.baseline().unwrap();
        assert_eq!(r.schema_version, 1);
        assert_eq!(e.phase(), Phase::Detection);
        let ok = e
            .ingest(&RawRequest::new("GET", "/user/7/orders").header("accept", "application/json"));
        assert!(!ok.verdict().unwrap().is_anomalous());
        let bad = e.ingest(&RawRequest::new("GET", "/admin"));
        assert_eq!(
            bad.verdict().unwrap().primary_reason(),
            Some(ReasonCode::UnknownRootPath)
        );
        let mal = e.ingest(&RawRequest::new("GET", "/a%zz"));
        assert_eq!(
            mal.verdict().unwrap().primary_reason(),
            Some(ReasonCode::MalformedUrl)
        );
        let s = e.stats();
        assert_eq!(
            (s.ingested, s.learned, s.classified, s.anomalous),
            (43, 40, 3, 2)
        );
        assert_eq!(s.latency.count, 2);
    }

    #[test]
    fn reset_returns_to_fresh_training() {
        let e = Engine::new(small_config());
        learn_users(&e, 40);
        e.baseline().unwrap();
        e.reset();
        e.reset();
        assert_eq!(e.phase(), Phase::Training);
        assert_eq!(
            e.tree_snapshot().to_json(),
            r#"{"segment":"","children":[]}"#
        );
        assert_eq!(e.config(), &small_config());
        assert_eq!(e.stats(), Engine::new(small_config()).stats());
        assert_eq!(
            e.ingest(&RawRequest::new("GET", "/x")),
            IngestOutcome::Learned
        );
    }

    #[test]
    fn updating_folds_delta_into_new_version() {
        let e = Engine::new(small_config());
        learn_users(&e, 40);
        e.baseline().unwrap();
        e.set_phase(Phase::Updating).unwrap();
        e.ingest(&RawRequest::new("GET", "/health"));
        assert_eq!(e.stats().pending_updates, 1);
        e.set_phase(Phase::Detection).unwrap();
        assert_eq!(e.versions(), [1, 2]);
        assert_eq!(e.diff(1, 2).unwrap().added_paths, ["/health"]);
        assert!(matches!(e.diff(1, 9), Err(Error::UnknownVersion(9))));
    }

    #[test]
    fn state_round_trip() {
        let e = Engine::new(small_config());
        learn_users(&e, 40);
        e.baseline().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("state.json");
        e.save_state(&p).unwrap();
        let back = Engine::load_state(&p).unwrap();
        assert_eq!(back.phase(), Phase::Detection);
        let req = parse_request(&RawRequest::new("GET", "/user/3/orders")).unwrap();
        assert_eq!(e.classify(&req).unwrap(), back.classify(&req).unwrap());
    }
}

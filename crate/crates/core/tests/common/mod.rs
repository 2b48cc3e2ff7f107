//! Shared generators and brute-force oracles for the integration suites.
#![allow(dead_code)]

use std::collections::BTreeSet;

use apimap::autoencoder::{AEModel, TrainConfig};
use apimap::graph::TolerancePolicy;
use apimap::hashing::FEATURE_DIM;
use apimap::reducer::{reduce_tree, regeneralize, update_schema, ReducedSchema, SchemaNode};
use apimap::tree::ApiTree;
use apimap::{parse_request, ParsedRequest, RawRequest, ReasonCode};
use ndarray::Array2;
use percent_encoding::percent_decode_str;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

pub const K: usize = 3;

const RESOURCES: [&str; 10] = [
    "users", "orders", "items", "api", "files", "teams", "search", "v1", "admin", "me",
];
const SUBS: [&str; 8] = [
    "profile", "orders", "settings", "avatar", "edit", "history", "me", "items",
];
const NAMES: [&str; 8] = ["john", "steve", "maria", "wei", "olga", "ana", "li", "tom"];
const QUERY_KEYS: [&str; 6] = ["page", "limit", "q", "sort", "lang", "fields"];
const METHODS: [&str; 4] = ["GET", "POST", "PUT", "DELETE"];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn hex(rng: &mut impl Rng, n: usize) -> String {
    (0..n)
        .map(|_| char::from(b"0123456789abcdef"[rng.random_range(0..16)]))
        .collect()
}

fn uuid(rng: &mut impl Rng) -> String {
    format!(
        "{}-{}-{}-{}-{}",
        hex(rng, 8),
        hex(rng, 4),
        hex(rng, 4),
        hex(rng, 4),
        hex(rng, 12)
    )
}

fn token(rng: &mut impl Rng, n: usize) -> String {
    let cs = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789";
    let mut s: String = (0..n)
        .map(|_| char::from(cs[rng.random_range(0..cs.len())]))
        .collect();
    s.replace_range(0..2, "aZ");
    s
}

fn word(rng: &mut impl Rng, n: usize) -> String {
    (0..n)
        .map(|_| char::from(rng.random_range(b'g'..=b'z')))
        .collect()
}

#[derive(Clone, Copy)]
enum IdKind {
    Int,
    Uuid,
    Hex,
    Email,
    Token,
    Name,
    Fixed,
}

fn id_value(kind: IdKind, rng: &mut impl Rng) -> String {
    match kind {
        IdKind::Int => rng.random_range(1..100_000u32).to_string(),
        IdKind::Uuid => uuid(rng),
        IdKind::Hex => {
            let n = rng.random_range(9..16);
            format!("{}f", hex(rng, n))
        }
        IdKind::Email => {
            let n = rng.random_range(3..8);
            format!("{}@{}.com", word(rng, n), word(rng, 4))
        }
        IdKind::Token => {
            let n = rng.random_range(12..20);
            token(rng, n)
        }
        IdKind::Name => NAMES.choose(rng).unwrap().to_string(),
        IdKind::Fixed => SUBS.choose(rng).unwrap().to_string(),
    }
}

struct Shape {
    parts: Vec<Option<&'static str>>,
    ids: Vec<IdKind>,
    methods: Vec<&'static str>,
    query: Vec<&'static str>,
}

/// A random request stream over a small random API: 1-4 resources, each
/// with static parts and id slots of mixed kinds, plus some one-off noise.
pub fn random_stream(rng: &mut impl Rng) -> Vec<RawRequest> {
    let kinds = [
        IdKind::Int,
        IdKind::Uuid,
        IdKind::Hex,
        IdKind::Email,
        IdKind::Token,
        IdKind::Name,
        IdKind::Fixed,
    ];
    let shapes: Vec<Shape> = (0..rng.random_range(1..=4))
        .map(|_| {
            let mut parts = vec![Some(*RESOURCES.choose(rng).unwrap())];
            let mut ids = Vec::new();
            for _ in 0..rng.random_range(0..=3) {
                if rng.random_bool(0.55) {
                    parts.push(None);
                    ids.push(*kinds.choose(rng).unwrap());
                } else {
                    parts.push(Some(*SUBS.choose(rng).unwrap()));
                }
            }
            let nm = rng.random_range(1..=2);
            let mut methods: Vec<&str> = METHODS.choose_multiple(rng, nm).copied().collect();
            methods.sort_unstable();
            let nq = rng.random_range(0..=2);
            let query = QUERY_KEYS.choose_multiple(rng, nq).copied().collect();
            Shape {
                parts,
                ids,
                methods,
                query,
            }
        })
        .collect();
    let n = rng.random_range(10..=80);
    let mut out = Vec::with_capacity(n + 4);
    for _ in 0..n {
        let s = shapes.choose(rng).unwrap();
        let mut ids = s.ids.iter();
        let segs: Vec<String> = s
            .parts
            .iter()
            .map(|p| match p {
                Some(l) => l.to_string(),
                None => id_value(*ids.next().unwrap(), rng),
            })
            .collect();
        let mut url = format!("/{}", segs.join("/"));
        let mut q = Vec::new();
        for k in &s.query {
            if rng.random_bool(0.7) {
                q.push(format!("{k}={}", rng.random_range(1..50)));
            }
        }
        if !q.is_empty() {
            url = format!("{url}?{}", q.join("&"));
        }
        out.push(RawRequest::new(*s.methods.choose(rng).unwrap(), url));
    }
    for _ in 0..rng.random_range(0..4) {
        let url = format!("/{}/{}", RESOURCES.choose(rng).unwrap(), word(rng, 5));
        out.push(RawRequest::new("GET", url));
    }
    if rng.random_bool(0.1) {
        out.push(RawRequest::new("GET", "/"));
    }
    out
}

pub fn parsed(r: &RawRequest) -> ParsedRequest {
    parse_request(r).expect("generated requests parse")
}

pub fn tree_of(rs: &[RawRequest]) -> ApiTree {
    let mut t = ApiTree::default();
    for r in rs {
        t.insert_request(&parsed(r));
    }
    t
}

pub fn check_idempotent(stream: &[RawRequest]) -> Result<(), String> {
    let s = reduce_tree(&tree_of(stream), K);
    let again = regeneralize(&s);
    if again.topology() != s.topology() {
        return Err(format!(
            "re-reduction changed the schema:\n{}\nvs\n{}",
            s.topology(),
            again.topology()
        ));
    }
    Ok(())
}

pub fn check_order_independent(stream: &[RawRequest], rng: &mut impl Rng) -> Result<(), String> {
    let mut shuffled = stream.to_vec();
    shuffled.shuffle(rng);
    let a = reduce_tree(&tree_of(stream), K).topology();
    let b = reduce_tree(&tree_of(&shuffled), K).topology();
    if a != b {
        return Err(format!("insertion order changed the schema:\n{a}\nvs\n{b}"));
    }
    Ok(())
}

/// Reduce a prefix, fold the rest in as an update, compare with one batch.
pub fn check_incremental(stream: &[RawRequest], split: usize) -> Result<(), String> {
    let (a, b) = stream.split_at(split.min(stream.len()));
    let first = reduce_tree(&tree_of(a), K);
    let updated = update_schema(&first, &tree_of(b), K);
    let batch = reduce_tree(&tree_of(stream), K);
    if updated.topology() != batch.topology() {
        return Err(format!(
            "incremental and batch differ at split {split}:\n{}\nvs\n{}",
            updated.topology(),
            batch.topology()
        ));
    }
    if updated.version != first.version + 1 {
        return Err("update did not bump the version".into());
    }
    Ok(())
}

/// A reduced schema of at most `max_nodes` nodes plus the traffic behind it.
pub fn random_schema(rng: &mut impl Rng, max_nodes: usize) -> (ReducedSchema, Vec<RawRequest>) {
    loop {
        let stream: Vec<RawRequest> = (0..rng.random_range(1..=4))
            .flat_map(|_| random_stream(rng))
            .collect();
        let s = reduce_tree(&tree_of(&stream), K);
        if s.node_count() <= max_nodes {
            return (s, stream);
        }
    }
}

/// A mix of replayed stream requests and mutations of them.
pub fn probe_requests(stream: &[RawRequest], n: usize, rng: &mut impl Rng) -> Vec<ParsedRequest> {
    let odd = [
        "12",
        "abc'--",
        "x",
        "deadbeef99",
        "me",
        "john",
        "<script>",
        "a%2Fb",
    ];
    (0..n)
        .map(|_| {
            let mut p = parsed(stream.choose(rng).unwrap());
            match rng.random_range(0..10) {
                0..=3 => {}
                4 if !p.segments.is_empty() => {
                    let i = rng.random_range(0..p.segments.len());
                    p.segments[i] = match rng.random_range(0..4) {
                        0 => odd.choose(rng).unwrap().to_string(),
                        1 => uuid(rng),
                        2 => {
                            let n = rng.random_range(3..60);
                            token(rng, n)
                        }
                        _ => rng.random_range(0..10_000_000_000u64).to_string(),
                    };
                }
                5 => p.segments.push(odd.choose(rng).unwrap().to_string()),
                6 => {
                    p.segments.pop();
                }
                7 => {
                    p.method = ["GET", "POST", "PATCH", "TRACE", "PROPFIND"]
                        .choose(rng)
                        .unwrap()
                        .to_string()
                }
                8 => p.query.push(("debug".into(), "1".into())),
                _ => {
                    if let Some(first) = p.segments.first_mut() {
                        *first = word(rng, 6);
                    }
                }
            }
            p
        })
        .collect()
}

/// Every failure the brute-force search ran into, with how many segments had
/// been matched when it happened.
pub struct OracleVerdict {
    pub accepted: bool,
    pub failures: Vec<(usize, ReasonCode)>,
}

impl OracleVerdict {
    pub fn codes(&self) -> BTreeSet<ReasonCode> {
        self.failures.iter().map(|f| f.1).collect()
    }

    pub fn deepest_codes(&self) -> BTreeSet<ReasonCode> {
        let max = self.failures.iter().map(|f| f.0).max().unwrap_or(0);
        self.failures
            .iter()
            .filter(|f| f.0 == max)
            .map(|f| f.1)
            .collect()
    }
}

/// Tries every root-to-node path of the schema tree whose length equals the
/// request's segment count, with no ordering or pruning.
pub fn brute_force_validate(
    schema: &ReducedSchema,
    req: &ParsedRequest,
    policy: &TolerancePolicy,
) -> OracleVerdict {
    let mut v = OracleVerdict {
        accepted: false,
        failures: Vec::new(),
    };
    if !policy.allowed_methods.contains(&req.method) {
        v.failures.push((0, ReasonCode::UndocumentedMethod));
        return v;
    }
    all_paths(&schema.root, req, 0, policy, &mut v);
    if v.accepted {
        v.failures.clear();
    }
    for f in &mut v.failures {
        let segment_code = matches!(
            f.1,
            ReasonCode::UnknownSegment | ReasonCode::TypeMismatch | ReasonCode::LengthOutOfRange
        );
        if f.0 == 0 && segment_code {
            f.1 = ReasonCode::UnknownRootPath;
        }
    }
    v
}

fn all_paths(
    node: &SchemaNode,
    req: &ParsedRequest,
    idx: usize,
    policy: &TolerancePolicy,
    v: &mut OracleVerdict,
) {
    if idx == req.segments.len() {
        let documented = node
            .endpoint
            .as_ref()
            .filter(|e| e.methods.contains_key(&req.method));
        match documented {
            None => v.failures.push((idx, ReasonCode::UndocumentedMethod)),
            Some(e) => {
                let extra = req
                    .query
                    .iter()
                    .any(|(k, _)| !e.query_params.contains_key(k));
                if extra && !policy.allow_extra_query {
                    v.failures.push((idx, ReasonCode::UndocumentedQueryParam));
                } else {
                    v.accepted = true;
                }
            }
        }
        return;
    }
    let token = &req.segments[idx];
    let static_hit = node
        .children
        .iter()
        .any(|c| c.placeholder.is_none() && c.label == *token);
    let has_placeholders = node.children.iter().any(|c| c.placeholder.is_some());
    if !static_hit && !has_placeholders {
        v.failures.push((idx, ReasonCode::UnknownSegment));
        return;
    }
    for c in &node.children {
        match &c.placeholder {
            None if c.label == *token => all_paths(c, req, idx + 1, policy, v),
            None => {}
            Some(meta) => {
                if !policy.admits_type(meta, token) {
                    v.failures.push((idx, ReasonCode::TypeMismatch));
                } else if !policy.admits_length(meta, token.chars().count()) {
                    v.failures.push((idx, ReasonCode::LengthOutOfRange));
                } else {
                    all_paths(c, req, idx + 1, policy, v);
                }
            }
        }
    }
}

/// Fills one OpenAPI path parameter schema with a conforming value.
pub fn synth_value(schema: &Value, rng: &mut impl Rng) -> String {
    let len_in = |lo: &str, hi: &str, floor: usize, rng: &mut dyn rand::RngCore| {
        let lo = schema[lo].as_u64().map_or(floor, |x| x as usize).max(floor);
        let hi = schema[hi].as_u64().map_or(lo, |x| x as usize).max(lo);
        rng.random_range(lo..=hi)
    };
    match (
        schema["type"].as_str(),
        schema["format"].as_str(),
        schema["pattern"].as_str(),
    ) {
        (Some("integer"), _, _) => {
            let n = len_in("x-min-length", "x-max-length", 1, rng);
            let mut s = rng.random_range(1..=9u8).to_string();
            s.extend((1..n).map(|_| char::from(b'0' + rng.random_range(0..10u8))));
            s
        }
        (_, Some("uuid"), _) => uuid(rng),
        (_, Some("email"), _) => {
            let n = len_in("minLength", "maxLength", 8, rng);
            format!("{}@ex.com", word(rng, n - 7))
        }
        (_, _, Some(p)) if p.contains("0-9a-fA-F") => {
            let n = len_in("minLength", "maxLength", 8, rng);
            format!("{}f", hex(rng, n - 1))
        }
        (_, _, Some(_)) => {
            let n = len_in("minLength", "maxLength", 2, rng);
            token(rng, n)
        }
        _ => {
            let n = len_in("minLength", "maxLength", 1, rng);
            word(rng, n)
        }
    }
}

/// Requests built only from the document: path templates, operations,
/// path-parameter schemas and query keys.
pub fn synthesize_from_doc(doc: &Value, n: usize, rng: &mut impl Rng) -> Vec<RawRequest> {
    let mut ops: Vec<(String, String, Vec<Value>, Vec<String>)> = Vec::new();
    for (path, item) in doc["paths"].as_object().unwrap() {
        let item = item.as_object().unwrap();
        let mut methods: Vec<(String, Vec<Value>)> = item
            .iter()
            .filter(|(k, _)| !k.starts_with("x-"))
            .map(|(k, op)| {
                (
                    k.to_ascii_uppercase(),
                    op["parameters"].as_array().unwrap().clone(),
                )
            })
            .collect();
        if let Some(extra) = item.get("x-unlisted-methods") {
            let params = methods.first().map(|m| m.1.clone()).unwrap_or_default();
            for m in extra.as_array().unwrap() {
                methods.push((m.as_str().unwrap().to_string(), params.clone()));
            }
        }
        for (m, params) in methods {
            let query = params
                .iter()
                .filter(|p| p["in"] == "query")
                .map(|p| p["name"].as_str().unwrap().to_string())
                .collect();
            ops.push((path.clone(), m, params, query));
        }
    }
    assert!(!ops.is_empty(), "document has no operations");
    (0..n)
        .map(|i| {
            let (path, method, params, query) = &ops[i % ops.len()];
            let segs: Vec<String> = path
                .split('/')
                .filter(|s| !s.is_empty())
                .map(
                    |s| match s.strip_prefix('{').and_then(|s| s.strip_suffix('}')) {
                        Some(name) => {
                            let p = params
                                .iter()
                                .find(|p| p["in"] == "path" && p["name"] == name)
                                .unwrap_or_else(|| panic!("{path}: no parameter {name}"));
                            synth_value(&p["schema"], rng)
                        }
                        None => s.to_string(),
                    },
                )
                .collect();
            let mut url = format!("/{}", segs.join("/"));
            let mut q = Vec::new();
            for k in query {
                if rng.random_bool(0.5) {
                    q.push(format!("{k}={}", word(rng, 3)));
                }
            }
            if !q.is_empty() {
                url = format!("{url}?{}", q.join("&"));
            }
            RawRequest::new(method.clone(), url)
        })
        .collect()
}

/// Resolves every document path to a schema terminal node (as a child-index
/// path). Errors if a path does not resolve, resolves twice, or if some
/// terminal node has no path.
pub fn doc_tree_bijection(doc: &Value, schema: &ReducedSchema) -> Result<usize, String> {
    let mut hit: BTreeSet<Vec<usize>> = BTreeSet::new();
    for path in doc["paths"].as_object().unwrap().keys() {
        let mut node = &schema.root;
        let mut addr = Vec::new();
        for seg in path.split('/').filter(|s| !s.is_empty()) {
            let found = match seg.strip_prefix('{').and_then(|s| s.strip_suffix('}')) {
                Some(name) => node.children.iter().position(|c| {
                    c.placeholder.as_ref().is_some_and(|m| {
                        let base = m.name.trim_matches(|ch| ch == '{' || ch == '}');
                        name == base
                            || name
                                .strip_prefix(base)
                                .is_some_and(|rest| rest.starts_with('_'))
                    })
                }),
                None => {
                    let label = percent_decode_str(seg)
                        .decode_utf8()
                        .map_err(|e| e.to_string())?;
                    node.children
                        .iter()
                        .position(|c| c.placeholder.is_none() && c.label == label)
                }
            };
            let i = found.ok_or_else(|| format!("{path}: segment {seg} not in schema"))?;
            node = &node.children[i];
            addr.push(i);
        }
        if node.endpoint.is_none() {
            return Err(format!("{path}: resolves to a non-terminal node"));
        }
        if !hit.insert(addr) {
            return Err(format!("{path}: two paths share a node"));
        }
    }
    if hit.len() != schema.terminal_count() {
        return Err(format!(
            "{} paths for {} terminal nodes",
            hit.len(),
            schema.terminal_count()
        ));
    }
    Ok(hit.len())
}

/// Central differences on `samples` random coordinates; returns the
/// normwise relative error `|g_a - g_n| / max(|g_a|, |g_n|)`.
pub fn gradient_check(draw: u64, samples: usize, output_batch_norm: bool) -> f64 {
    let mut rng = rng(1000 + draw);
    let cfg = TrainConfig {
        seed: draw,
        output_batch_norm,
        ..TrainConfig::default()
    };
    let mut model = AEModel::new(FEATURE_DIM, &cfg);
    // perturb gamma/beta away from their initial 1/0 so every parameter matters
    let mut p = model.params();
    for v in p.iter_mut() {
        *v += rng.random_range(-0.05..0.05);
    }
    model.set_params(&p);
    let batch = 6;
    let x = Array2::from_shape_fn((batch, FEATURE_DIM), |_| {
        if rng.random_bool(0.1) {
            rng.random_range(-2.0..2.0)
        } else {
            0.0
        }
    });
    let (_, analytic) = model.loss_and_gradient(x.view());
    let base = model.params();
    // small enough that the step rarely crosses a rectifier kink
    let h = 1e-6;
    let mut num2 = 0.0;
    let mut ana2 = 0.0;
    let mut diff2 = 0.0;
    for _ in 0..samples {
        let i = rng.random_range(0..base.len());
        let mut plus = base.clone();
        plus[i] += h;
        model.set_params(&plus);
        let lp = model.batch_loss(x.view());
        let mut minus = base.clone();
        minus[i] -= h;
        model.set_params(&minus);
        let lm = model.batch_loss(x.view());
        let numeric = (lp - lm) / (2.0 * h);
        num2 += numeric * numeric;
        ana2 += analytic[i] * analytic[i];
        diff2 += (numeric - analytic[i]).powi(2);
    }
    model.set_params(&base);
    diff2.sqrt() / num2.sqrt().max(ana2.sqrt()).max(1e-300)
}

//! Structural validation against the reduced schema.
//!
//! The schema tree is flattened into a directed graph: segment and
//! placeholder nodes linked parent to child, with method and query-parameter
//! nodes hanging off every endpoint. A request is matched by locating its
//! first segment among the root's children (breadth-first) and then walking
//! the remaining segments depth-first, trying the exact static child before
//! placeholders and backtracking across placeholder branches.

use std::collections::{BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::reducer::{PlaceholderMeta, ReducedSchema, SchemaNode};
use crate::request::{ParsedRequest, DEFAULT_METHODS};
use crate::segment::classify_segment;
use crate::verdict::{Reason, ReasonCode, Stage, Verdict};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TolerancePolicy {
    /// Placeholder lengths may stray this fraction beyond the learned bounds.
    pub length_slack: f64,
    pub allow_extra_query: bool,
    /// When off, placeholders check length only.
    pub strict_types: bool,
    /// Methods outside this set are always flagged.
    pub allowed_methods: BTreeSet<String>,
}

impl Default for TolerancePolicy {
    fn default() -> Self {
        Self {
            length_slack: 0.5,
            allow_extra_query: false,
            strict_types: true,
            allowed_methods: DEFAULT_METHODS.iter().map(|m| m.to_string()).collect(),
        }
    }
}

impl TolerancePolicy {
    pub fn admits_length(&self, meta: &PlaceholderMeta, len: usize) -> bool {
        let slack = self.length_slack.max(0.0);
        let len = len as f64;
        len >= meta.min_len as f64 * (1.0 - slack) && len <= meta.max_len as f64 * (1.0 + slack)
    }

    pub fn admits_type(&self, meta: &PlaceholderMeta, value: &str) -> bool {
        if !self.strict_types {
            return true;
        }
        let class = classify_segment(value);
        meta.accepted_classes.contains(&class) || meta.inferred_type.admits(class, value)
    }
}

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Root,
    Static,
    Placeholder,
    Method,
    QueryParam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub kind: NodeKind,
    pub label: String,
    pub depth: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub placeholder: Option<PlaceholderMeta>,
}

#[derive(Debug, Clone, Default)]
struct Endpoint {
    methods: BTreeSet<String>,
    query: BTreeSet<String>,
}

#[derive(Debug, Clone)]
pub struct SchemaGraph {
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<(NodeId, NodeId)>,
    pub root: NodeId,
    pub version: u64,
    static_children: Vec<HashMap<String, NodeId>>,
    /// Placeholder children, typed before `other_dynamic`.
    placeholder_children: Vec<Vec<NodeId>>,
    endpoints: Vec<Option<Endpoint>>,
    templates: Vec<String>,
}

impl SchemaGraph {
    pub fn segment_node_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n.kind, NodeKind::Static | NodeKind::Placeholder))
            .count()
    }

    pub fn count_kind(&self, kind: NodeKind) -> usize {
        self.nodes.iter().filter(|n| n.kind == kind).count()
    }

    pub fn node(&self, id: NodeId) -> &GraphNode {
        &self.nodes[id]
    }

    /// Templated path from the root to `id`.
    pub fn template(&self, id: NodeId) -> &str {
        &self.templates[id]
    }

    fn segment_children(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        let mut statics: Vec<NodeId> = self.static_children[id].values().copied().collect();
        statics.sort_unstable();
        statics
            .into_iter()
            .chain(self.placeholder_children[id].iter().copied())
    }

    fn push(&mut self, node: GraphNode, template: String) -> NodeId {
        self.nodes.push(node);
        self.static_children.push(HashMap::new());
        self.placeholder_children.push(Vec::new());
        self.endpoints.push(None);
        self.templates.push(template);
        self.nodes.len() - 1
    }
}

pub fn build_graph(schema: &ReducedSchema) -> SchemaGraph {
    let mut g = SchemaGraph {
        nodes: Vec::new(),
        edges: Vec::new(),
        root: 0,
        version: schema.version,
        static_children: Vec::new(),
        placeholder_children: Vec::new(),
        endpoints: Vec::new(),
        templates: Vec::new(),
    };
    let root = g.push(
        GraphNode {
            kind: NodeKind::Root,
            label: String::new(),
            depth: 0,
            placeholder: None,
        },
        "/".into(),
    );
    attach(&mut g, root, &schema.root, 0);
    g
}

fn attach(g: &mut SchemaGraph, id: NodeId, node: &SchemaNode, depth: usize) {
    if let Some(e) = &node.endpoint {
        let ep = Endpoint {
            methods: e.methods.keys().cloned().collect(),
            query: e.query_params.keys().cloned().collect(),
        };
        let base = g.templates[id].clone();
        for m in &ep.methods {
            let mid = g.push(
                GraphNode {
                    kind: NodeKind::Method,
                    label: m.clone(),
                    depth: depth + 1,
                    placeholder: None,
                },
                base.clone(),
            );
            g.edges.push((id, mid));
        }
        for q in &ep.query {
            let qid = g.push(
                GraphNode {
                    kind: NodeKind::QueryParam,
                    label: q.clone(),
                    depth: depth + 1,
                    placeholder: None,
                },
                base.clone(),
            );
            g.edges.push((id, qid));
        }
        g.endpoints[id] = Some(ep);
    }
    let mut placeholders: Vec<(crate::segment::SegmentClass, NodeId)> = Vec::new();
    for child in &node.children {
        let template = if depth == 0 {
            format!("/{}", child.label)
        } else {
            format!("{}/{}", g.templates[id], child.label)
        };
        let cid = g.push(
            GraphNode {
                kind: if child.is_placeholder() {
                    NodeKind::Placeholder
                } else {
                    NodeKind::Static
                },
                label: child.label.clone(),
                depth: depth + 1,
                placeholder: child.placeholder.clone(),
            },
            template,
        );
        g.edges.push((id, cid));
        match &child.placeholder {
            Some(p) => placeholders.push((p.inferred_type, cid)),
            None => {
                g.static_children[id].insert(child.label.clone(), cid);
            }
        }
        attach(g, cid, child, depth + 1);
    }
    placeholders.sort();
    g.placeholder_children[id] = placeholders.into_iter().map(|(_, c)| c).collect();
}

/// Finds the node matching the request's first segment. Static labels win,
/// then typed placeholders, then `other_dynamic`. A request for `/` starts at
/// the root.
pub fn locate_root(graph: &SchemaGraph, req: &ParsedRequest) -> Result<NodeId, Reason> {
    let Some(first) = req.segments.first() else {
        return Ok(graph.root);
    };
    let policy = TolerancePolicy::default();
    let mut best: Option<(u8, NodeId)> = None;
    let mut queue = VecDeque::from([graph.root]);
    while let Some(id) = queue.pop_front() {
        if graph.nodes[id].depth >= 1 {
            // only the first layer can host the first segment
            let rank = match &graph.nodes[id].placeholder {
                None if graph.nodes[id].label == *first => Some(0),
                None => None,
                Some(meta) if policy.admits_type(meta, first) => Some(
                    if meta.inferred_type == crate::segment::SegmentClass::OtherDynamic {
                        2
                    } else {
                        1
                    },
                ),
                Some(_) => None,
            };
            if let Some(r) = rank {
                if best.is_none_or(|(b, _)| r < b) {
                    best = Some((r, id));
                }
            }
            continue;
        }
        queue.extend(graph.segment_children(id));
    }
    best.map(|(_, id)| id).ok_or_else(|| Reason {
        code: ReasonCode::UnknownRootPath,
        location: "/".into(),
        token: first.clone(),
    })
}

struct Walk<'a> {
    graph: &'a SchemaGraph,
    req: &'a ParsedRequest,
    policy: &'a TolerancePolicy,
    /// Deepest failure seen so far: (segments consumed, reason).
    failure: Option<(usize, Reason)>,
}

impl Walk<'_> {
    fn fail(&mut self, progress: usize, code: ReasonCode, at: NodeId, token: &str) {
        let code = if progress == 0 && is_segment_code(code) {
            ReasonCode::UnknownRootPath
        } else {
            code
        };
        if self.failure.as_ref().is_none_or(|(p, _)| progress > *p) {
            self.failure = Some((
                progress,
                Reason {
                    code,
                    location: self.graph.templates[at].clone(),
                    token: token.to_string(),
                },
            ));
        }
    }

    fn terminal(&mut self, id: NodeId) -> bool {
        let n = self.req.segments.len();
        let Some(ep) = &self.graph.endpoints[id] else {
            self.fail(n, ReasonCode::UndocumentedMethod, id, &self.req.method);
            return false;
        };
        if !ep.methods.contains(&self.req.method) {
            self.fail(n, ReasonCode::UndocumentedMethod, id, &self.req.method);
            return false;
        }
        if !self.policy.allow_extra_query {
            if let Some((k, _)) = self.req.query.iter().find(|(k, _)| !ep.query.contains(k)) {
                self.fail(n, ReasonCode::UndocumentedQueryParam, id, k);
                return false;
            }
        }
        true
    }

    fn visit(&mut self, id: NodeId, idx: usize) -> bool {
        let segs = &self.req.segments;
        if idx == segs.len() {
            return self.terminal(id);
        }
        let token = segs[idx].as_str();
        let static_hit = self.graph.static_children[id].get(token).copied();
        if let Some(c) = static_hit {
            if self.visit(c, idx + 1) {
                return true;
            }
        }
        let placeholders = &self.graph.placeholder_children[id];
        if static_hit.is_none() && placeholders.is_empty() {
            self.fail(idx, ReasonCode::UnknownSegment, id, token);
            return false;
        }
        for &p in placeholders {
            let meta = self.graph.nodes[p]
                .placeholder
                .as_ref()
                .expect("placeholder node carries meta");
            if !self.policy.admits_type(meta, token) {
                self.fail(idx, ReasonCode::TypeMismatch, p, token);
                continue;
            }
            if !self.policy.admits_length(meta, token.chars().count()) {
                self.fail(idx, ReasonCode::LengthOutOfRange, p, token);
                continue;
            }
            if self.visit(p, idx + 1) {
                return true;
            }
        }
        false
    }
}

fn is_segment_code(c: ReasonCode) -> bool {
    matches!(
        c,
        ReasonCode::UnknownSegment | ReasonCode::TypeMismatch | ReasonCode::LengthOutOfRange
    )
}

/// Structural stage. Accepted iff some schema path admits every segment and
/// ends on an endpoint that documents the method and every query key.
pub fn validate(graph: &SchemaGraph, req: &ParsedRequest, policy: &TolerancePolicy) -> Verdict {
    let mut verdict = if !policy.allowed_methods.contains(&req.method) {
        Verdict::anomalous(
            Stage::Structural,
            Reason {
                code: ReasonCode::UndocumentedMethod,
                location: req.normalized_path(),
                token: req.method.clone(),
            },
        )
    } else {
        let mut walk = Walk {
            graph,
            req,
            policy,
            failure: None,
        };
        if walk.visit(graph.root, 0) {
            Verdict::accepted()
        } else {
            let (_, reason) = walk.failure.expect("failed walk records a reason");
            Verdict::anomalous(Stage::Structural, reason)
        }
    };
    verdict.schema_version = Some(graph.version);
    verdict
}

//! Map phase: requests accumulate into a path tree.
//!
//! Each node is one path segment. The node where a request's path ends
//! carries its [`EndpointMeta`]: methods, query parameter statistics and
//! header names. Header values and query values are not structure; they go to
//! the content stage.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::request::ParsedRequest;
use crate::value_stats::{ValueStats, DEFAULT_EXAMPLE_CAP};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointMeta {
    /// Method -> number of requests.
    pub methods: BTreeMap<String, u64>,
    pub query_params: BTreeMap<String, ValueStats>,
    /// Lowercased header name -> occurrences.
    pub observed_headers: BTreeMap<String, u64>,
    pub request_count: u64,
}

impl EndpointMeta {
    pub fn merge(&mut self, other: &EndpointMeta) {
        for (m, c) in &other.methods {
            *self.methods.entry(m.clone()).or_default() += c;
        }
        for (k, s) in &other.query_params {
            match self.query_params.get_mut(k) {
                Some(mine) => mine.merge(s),
                None => {
                    self.query_params.insert(k.clone(), s.clone());
                }
            }
        }
        for (h, c) in &other.observed_headers {
            *self.observed_headers.entry(h.clone()).or_default() += c;
        }
        self.request_count += other.request_count;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeNode {
    pub segment: String,
    pub children: BTreeMap<String, TreeNode>,
    pub endpoint: Option<EndpointMeta>,
    pub hit_count: u64,
    pub value_stats: ValueStats,
}

impl TreeNode {
    pub fn new(segment: impl Into<String>, example_cap: usize) -> Self {
        Self {
            segment: segment.into(),
            children: BTreeMap::new(),
            endpoint: None,
            hit_count: 0,
            value_stats: ValueStats::with_cap(example_cap),
        }
    }

    /// Adds `other`'s counts, statistics and children into `self`.
    pub fn merge(&mut self, other: &TreeNode) {
        self.hit_count += other.hit_count;
        self.value_stats.merge(&other.value_stats);
        if let Some(e) = &other.endpoint {
            self.endpoint
                .get_or_insert_with(EndpointMeta::default)
                .merge(e);
        }
        for (label, child) in &other.children {
            match self.children.get_mut(label) {
                Some(mine) => mine.merge(child),
                None => {
                    self.children.insert(label.clone(), child.clone());
                }
            }
        }
    }

    pub fn node_count(&self) -> usize {
        1 + self
            .children
            .values()
            .map(TreeNode::node_count)
            .sum::<usize>()
    }

    pub fn child(&self, label: &str) -> Option<&TreeNode> {
        self.children.get(label)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiTree {
    pub root: TreeNode,
    pub total_requests: u64,
    pub example_cap: usize,
}

impl Default for ApiTree {
    fn default() -> Self {
        Self::new(DEFAULT_EXAMPLE_CAP)
    }
}

impl ApiTree {
    pub fn new(example_cap: usize) -> Self {
        Self {
            root: TreeNode::new("", example_cap),
            total_requests: 0,
            example_cap,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.total_requests == 0
    }

    pub fn node_count(&self) -> usize {
        self.root.node_count()
    }

    /// Walks (creating as needed) the request's path and records endpoint
    /// metadata at the final node. `/` records on the root itself.
    pub fn insert_request(&mut self, req: &ParsedRequest) {
        let cap = self.example_cap;
        self.total_requests += 1;
        let mut node = &mut self.root;
        node.hit_count += 1;
        for seg in &req.segments {
            node = node
                .children
                .entry(seg.clone())
                .or_insert_with(|| TreeNode::new(seg.clone(), cap));
            node.hit_count += 1;
            node.value_stats.observe(seg);
        }
        let meta = node.endpoint.get_or_insert_with(EndpointMeta::default);
        *meta.methods.entry(req.method.clone()).or_default() += 1;
        for (k, v) in &req.query {
            meta.query_params
                .entry(k.clone())
                .or_insert_with(|| ValueStats::with_cap(cap))
                .observe(v);
        }
        for (name, _) in &req.headers {
            *meta
                .observed_headers
                .entry(name.to_ascii_lowercase())
                .or_default() += 1;
        }
        meta.request_count += 1;
    }

    pub fn merge(&mut self, other: &ApiTree) {
        self.total_requests += other.total_requests;
        self.root.merge(&other.root);
    }

    pub fn snapshot(&self) -> TreeSnapshot {
        TreeSnapshot {
            root: NodeView::from_node(&self.root),
        }
    }

    /// Looks up the node for a concrete path, if it was ever observed.
    pub fn find(&self, segments: &[String]) -> Option<&TreeNode> {
        segments
            .iter()
            .try_fold(&self.root, |n, s| n.children.get(s))
    }
}

pub fn merge_trees(a: &ApiTree, b: &ApiTree) -> ApiTree {
    let mut out = a.clone();
    out.merge(b);
    out
}

/// Immutable, render-ready view of a tree. Children are sorted by label so
/// the JSON is stable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeSnapshot {
    #[serde(flatten)]
    pub root: NodeView,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeView {
    pub segment: String,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub hit_count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<EndpointView>,
    pub children: Vec<NodeView>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointView {
    pub methods: BTreeMap<String, u64>,
    pub request_count: u64,
    pub query_params: BTreeMap<String, ParamView>,
    pub headers: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamView {
    pub count: u64,
    pub min_len: usize,
    pub max_len: usize,
    pub examples: Vec<String>,
}

fn is_zero(v: &u64) -> bool {
    *v == 0
}

impl NodeView {
    fn from_node(n: &TreeNode) -> Self {
        Self {
            segment: n.segment.clone(),
            hit_count: n.hit_count,
            endpoint: n.endpoint.as_ref().map(|e| EndpointView {
                methods: e.methods.clone(),
                request_count: e.request_count,
                query_params: e
                    .query_params
                    .iter()
                    .map(|(k, s)| {
                        (
                            k.clone(),
                            ParamView {
                                count: s.count,
                                min_len: s.min_len,
                                max_len: s.max_len,
                                examples: s.examples.clone(),
                            },
                        )
                    })
                    .collect(),
                headers: e.observed_headers.clone(),
            }),
            children: n.children.values().map(NodeView::from_node).collect(),
        }
    }
}

impl TreeSnapshot {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("snapshot serializes")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("snapshot serializes")
    }
}

//! Reduce phase: collapse dynamic sibling segments into typed placeholders.
//!
//! Two grouping rules run at every node, bottom-up, until neither fires:
//!
//! 1. *Class groups*: at least `k` static siblings whose labels share a
//!    non-static [`SegmentClass`] (ids, uuids, emails, ...).
//! 2. *Structural groups*: at least `k` siblings with non-empty, identical
//!    reduced subtrees (same child labels, methods and query keys). This
//!    catches dynamic names such as `john`/`steve` that classify as static.
//!
//! A group becomes one placeholder whose subtree is the union of the member
//! subtrees. A node never keeps two placeholders of the same inferred type;
//! they are merged. Because the rules are applied to a fixpoint, reducing an
//! already reduced schema changes nothing.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::segment::{classify_segment, SegmentClass};
use crate::tree::{ApiTree, EndpointMeta, TreeNode};
use crate::value_stats::ValueStats;

pub const DEFAULT_MERGE_THRESHOLD: usize = 3;

/// Placeholders are flagged random above this mean entropy (bits/char)...
pub const RANDOM_ENTROPY_BITS: f64 = 3.0;
/// ...when at least this fraction of observations are distinct.
pub const RANDOM_DISTINCT_RATIO: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReduceConfig {
    /// Minimum group size `k`.
    pub merge_threshold: usize,
    /// Static children seen on less than this fraction of their parent's
    /// traffic are dropped. `0.0` disables the rule.
    pub min_hit_fraction: f64,
}

impl Default for ReduceConfig {
    fn default() -> Self {
        Self {
            merge_threshold: DEFAULT_MERGE_THRESHOLD,
            min_hit_fraction: 0.0,
        }
    }
}

impl ReduceConfig {
    pub fn with_threshold(k: usize) -> Self {
        Self {
            merge_threshold: k.max(2),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaceholderMeta {
    pub name: String,
    pub inferred_type: SegmentClass,
    /// Every class observed among absorbed values. Values of these classes are
    /// admitted even when they differ from `inferred_type`.
    pub accepted_classes: BTreeSet<SegmentClass>,
    pub examples: Vec<String>,
    pub min_len: usize,
    pub max_len: usize,
    pub is_random: bool,
    pub merged_count: u64,
}

impl PlaceholderMeta {
    fn from_stats(name: String, inferred_type: SegmentClass, stats: &ValueStats) -> Self {
        let distinct = stats.distinct_estimate();
        let uniqueness = if stats.count == 0 {
            0.0
        } else {
            distinct as f64 / stats.count as f64
        };
        Self {
            name,
            inferred_type,
            accepted_classes: stats.observed_classes(),
            examples: stats.examples.clone(),
            min_len: stats.min_len,
            max_len: stats.max_len,
            is_random: stats.mean_entropy() > RANDOM_ENTROPY_BITS
                && uniqueness > RANDOM_DISTINCT_RATIO,
            merged_count: distinct,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaNode {
    /// Static segment text, or the placeholder name including braces.
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub placeholder: Option<PlaceholderMeta>,
    pub endpoint: Option<EndpointMeta>,
    pub hit_count: u64,
    pub value_stats: ValueStats,
    /// Static children by label, then placeholders by type.
    pub children: Vec<SchemaNode>,
}

impl SchemaNode {
    pub fn is_placeholder(&self) -> bool {
        self.placeholder.is_some()
    }

    pub fn node_count(&self) -> usize {
        1 + self
            .children
            .iter()
            .map(SchemaNode::node_count)
            .sum::<usize>()
    }

    /// Number of nodes (root included) carrying endpoint metadata.
    pub fn terminal_count(&self) -> usize {
        usize::from(self.endpoint.is_some())
            + self
                .children
                .iter()
                .map(SchemaNode::terminal_count)
                .sum::<usize>()
    }

    fn key(&self) -> ChildKey {
        match &self.placeholder {
            Some(p) => ChildKey::Placeholder(p.inferred_type),
            None => ChildKey::Static(self.label.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedSchema {
    pub root: SchemaNode,
    pub version: u64,
    /// Milliseconds since the Unix epoch.
    pub created_at: u64,
    pub source_request_count: u64,
    pub config: ReduceConfig,
    /// The accumulated map-phase tree this schema was reduced from; updates
    /// fold new traffic into it and reduce again.
    pub source: ApiTree,
}

impl ReducedSchema {
    pub fn empty() -> Self {
        let cfg = ReduceConfig::default();
        reduce_tree_with(&ApiTree::default(), &cfg)
    }

    pub fn node_count(&self) -> usize {
        self.root.node_count()
    }

    pub fn terminal_count(&self) -> usize {
        self.root.terminal_count()
    }

    /// Canonical structural rendering (labels, placeholder types, methods and
    /// query keys) used to compare schemas regardless of counts and times.
    pub fn topology(&self) -> String {
        let mut out = String::new();
        topology_of(&self.root, 0, &mut out);
        out
    }

    /// The JSON document served at `/schema` (the source tree is omitted).
    pub fn view(&self) -> SchemaView {
        SchemaView {
            version: self.version,
            created_at: self.created_at,
            source_request_count: self.source_request_count,
            merge_threshold: self.config.merge_threshold,
            root: SchemaNodeView::from_node(&self.root),
        }
    }

    /// Templated path (`/user/{user_param_0}/orders`) of every terminal node.
    pub fn templated_paths(&self) -> Vec<String> {
        let mut out = Vec::new();
        collect_templates(&self.root, &mut Vec::new(), &mut out);
        out
    }
}

fn collect_templates<'a>(n: &'a SchemaNode, stack: &mut Vec<&'a str>, out: &mut Vec<String>) {
    if n.endpoint.is_some() {
        out.push(format!("/{}", stack.join("/")));
    }
    for c in &n.children {
        stack.push(&c.label);
        collect_templates(c, stack, out);
        stack.pop();
    }
}

fn topology_of(n: &SchemaNode, depth: usize, out: &mut String) {
    use std::fmt::Write;
    let kind = match &n.placeholder {
        Some(p) => format!("<{}>", p.inferred_type),
        None => String::new(),
    };
    let _ = write!(out, "{}{}{}", "  ".repeat(depth), n.label, kind);
    if let Some(e) = &n.endpoint {
        let m: Vec<&str> = e.methods.keys().map(String::as_str).collect();
        let q: Vec<&str> = e.query_params.keys().map(String::as_str).collect();
        let _ = write!(out, " [{}] ?{}", m.join(","), q.join(","));
    }
    out.push('\n');
    for c in &n.children {
        topology_of(c, depth + 1, out);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaView {
    pub version: u64,
    pub created_at: u64,
    pub source_request_count: u64,
    pub merge_threshold: usize,
    pub root: SchemaNodeView,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaNodeView {
    pub label: String,
    pub hit_count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub placeholder: Option<PlaceholderMeta>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub methods: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub query_params: Vec<String>,
    pub children: Vec<SchemaNodeView>,
}

impl SchemaNodeView {
    fn from_node(n: &SchemaNode) -> Self {
        let (methods, query_params) = match &n.endpoint {
            Some(e) => (
                e.methods.keys().cloned().collect(),
                e.query_params.keys().cloned().collect(),
            ),
            None => (Vec::new(), Vec::new()),
        };
        Self {
            label: n.label.clone(),
            hit_count: n.hit_count,
            placeholder: n.placeholder.clone(),
            methods,
            query_params,
            children: n.children.iter().map(SchemaNodeView::from_node).collect(),
        }
    }
}

// ---------------------------------------------------------------------------
// Working representation

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum ChildKey {
    Static(String),
    Placeholder(SegmentClass),
}

#[derive(Debug, Clone)]
struct WorkNode {
    hit_count: u64,
    value_stats: ValueStats,
    endpoint: Option<EndpointMeta>,
    children: BTreeMap<ChildKey, WorkNode>,
}

impl WorkNode {
    fn from_tree(n: &TreeNode) -> Self {
        Self {
            hit_count: n.hit_count,
            value_stats: n.value_stats.clone(),
            endpoint: n.endpoint.clone(),
            children: n
                .children
                .iter()
                .map(|(k, c)| (ChildKey::Static(k.clone()), WorkNode::from_tree(c)))
                .collect(),
        }
    }

    fn from_schema(n: &SchemaNode) -> Self {
        Self {
            hit_count: n.hit_count,
            value_stats: n.value_stats.clone(),
            endpoint: n.endpoint.clone(),
            children: n
                .children
                .iter()
                .map(|c| (c.key(), WorkNode::from_schema(c)))
                .collect(),
        }
    }

    fn absorb(&mut self, other: WorkNode) {
        self.hit_count += other.hit_count;
        self.value_stats.merge(&other.value_stats);
        if let Some(e) = other.endpoint {
            self.endpoint
                .get_or_insert_with(EndpointMeta::default)
                .merge(&e);
        }
        for (k, c) in other.children {
            match self.children.get_mut(&k) {
                Some(mine) => mine.absorb(c),
                None => {
                    self.children.insert(k, c);
                }
            }
        }
    }

    /// Structural signature: methods, query keys and recursively the child
    /// keys. Placeholders are keyed by type, not name.
    fn signature(&self, out: &mut String) {
        out.push('(');
        if let Some(e) = &self.endpoint {
            for m in e.methods.keys() {
                out.push_str(m);
                out.push(',');
            }
            out.push('?');
            for q in e.query_params.keys() {
                out.push_str(&q.len().to_string());
                out.push(':');
                out.push_str(q);
            }
        }
        for (k, c) in &self.children {
            match k {
                ChildKey::Static(l) => {
                    out.push('s');
                    out.push_str(&l.len().to_string());
                    out.push(':');
                    out.push_str(l);
                }
                ChildKey::Placeholder(t) => {
                    out.push('p');
                    out.push_str(t.as_str());
                }
            }
            c.signature(out);
        }
        out.push(')');
    }
}

/// A set of sibling labels that reduction would merge into one placeholder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeGroup {
    pub rule: GroupRule,
    pub members: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupRule {
    Class(SegmentClass),
    Structural,
}

fn class_groups(node: &WorkNode, k: usize) -> Vec<(SegmentClass, Vec<ChildKey>)> {
    let mut by_class: BTreeMap<SegmentClass, Vec<ChildKey>> = BTreeMap::new();
    for key in node.children.keys() {
        if let ChildKey::Static(label) = key {
            let class = classify_segment(label);
            if class.is_dynamic() {
                by_class.entry(class).or_default().push(key.clone());
            }
        }
    }
    by_class.into_iter().filter(|(_, v)| v.len() >= k).collect()
}

fn structural_groups(node: &WorkNode, k: usize) -> Vec<Vec<ChildKey>> {
    let mut by_sig: BTreeMap<String, Vec<ChildKey>> = BTreeMap::new();
    for (key, child) in &node.children {
        if child.children.is_empty() {
            continue;
        }
        let mut sig = String::new();
        child.signature(&mut sig);
        by_sig.entry(sig).or_default().push(key.clone());
    }
    by_sig.into_values().filter(|v| v.len() >= k).collect()
}

fn key_label(k: &ChildKey) -> String {
    match k {
        ChildKey::Static(l) => l.clone(),
        ChildKey::Placeholder(t) => format!("{{{t}}}"),
    }
}

fn merge_into_placeholder(node: &mut WorkNode, members: &[ChildKey], cfg: &ReduceConfig) {
    let mut merged: Option<WorkNode> = None;
    for key in members {
        let child = node.children.remove(key).expect("group member exists");
        match merged.as_mut() {
            Some(m) => m.absorb(child),
            None => merged = Some(child),
        }
    }
    let mut merged = merged.expect("group is non-empty");
    generalize(&mut merged, cfg);
    insert_placeholder(node, merged, cfg);
}

/// Inserts under the key of the node's majority class, merging with an
/// existing placeholder of that type (and re-keying if the majority moves).
fn insert_placeholder(node: &mut WorkNode, mut p: WorkNode, cfg: &ReduceConfig) {
    loop {
        let key = ChildKey::Placeholder(p.value_stats.majority_class());
        match node.children.remove(&key) {
            Some(existing) => {
                p.absorb(existing);
                generalize(&mut p, cfg);
            }
            None => {
                node.children.insert(key, p);
                return;
            }
        }
    }
}

fn generalize(node: &mut WorkNode, cfg: &ReduceConfig) {
    let k = cfg.merge_threshold.max(2);
    for child in node.children.values_mut() {
        generalize(child, cfg);
    }
    loop {
        if let Some((_, members)) = class_groups(node, k).into_iter().next() {
            merge_into_placeholder(node, &members, cfg);
            continue;
        }
        if let Some(members) = structural_groups(node, k).into_iter().next() {
            merge_into_placeholder(node, &members, cfg);
            continue;
        }
        break;
    }
    if cfg.min_hit_fraction > 0.0 {
        let floor = cfg.min_hit_fraction * node.hit_count as f64;
        node.children
            .retain(|k, c| matches!(k, ChildKey::Placeholder(_)) || c.hit_count as f64 >= floor);
    }
}

fn base_name(label: &str) -> &str {
    if label.is_empty() {
        "root"
    } else {
        label.trim_start_matches('{').trim_end_matches('}')
    }
}

fn finish(label: String, meta: Option<PlaceholderMeta>, w: WorkNode) -> SchemaNode {
    let base = base_name(&label).to_string();
    let mut index = 0usize;
    let children = w
        .children
        .into_iter()
        .map(|(key, child)| match key {
            ChildKey::Static(l) => finish(l, None, child),
            ChildKey::Placeholder(t) => {
                let name = format!("{{{base}_param_{index}}}");
                index += 1;
                let meta = PlaceholderMeta::from_stats(name.clone(), t, &child.value_stats);
                finish(name, Some(meta), child)
            }
        })
        .collect();
    SchemaNode {
        label,
        placeholder: meta,
        endpoint: w.endpoint,
        hit_count: w.hit_count,
        value_stats: w.value_stats,
        children,
    }
}

fn now_millis() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Groups that one reduction round would form among `node`'s children.
/// Children are reduced first so structural comparison sees generalized
/// subtrees.
pub fn detect_dynamic_siblings(node: &TreeNode, k: usize) -> Vec<MergeGroup> {
    let cfg = ReduceConfig::with_threshold(k);
    let mut w = WorkNode::from_tree(node);
    for c in w.children.values_mut() {
        generalize(c, &cfg);
    }
    let k = cfg.merge_threshold;
    let mut groups: Vec<MergeGroup> = class_groups(&w, k)
        .into_iter()
        .map(|(class, members)| MergeGroup {
            rule: GroupRule::Class(class),
            members: members.iter().map(key_label).collect(),
        })
        .collect();
    let taken: BTreeSet<String> = groups.iter().flat_map(|g| g.members.clone()).collect();
    for members in structural_groups(&w, k) {
        let members: Vec<String> = members.iter().map(key_label).collect();
        if members.iter().all(|m| !taken.contains(m)) {
            groups.push(MergeGroup {
                rule: GroupRule::Structural,
                members,
            });
        }
    }
    groups
}

pub fn reduce_tree(tree: &ApiTree, k: usize) -> ReducedSchema {
    reduce_tree_with(tree, &ReduceConfig::with_threshold(k))
}

pub fn reduce_tree_with(tree: &ApiTree, cfg: &ReduceConfig) -> ReducedSchema {
    let mut w = WorkNode::from_tree(&tree.root);
    generalize(&mut w, cfg);
    ReducedSchema {
        root: finish(String::new(), None, w),
        version: 1,
        created_at: now_millis(),
        source_request_count: tree.total_requests,
        config: *cfg,
        source: tree.clone(),
    }
}

/// Folds post-baseline traffic into the schema. The result has the topology
/// a batch reduction of the combined traffic would produce.
pub fn update_schema(schema: &ReducedSchema, delta: &ApiTree, k: usize) -> ReducedSchema {
    let mut cfg = schema.config;
    cfg.merge_threshold = k.max(2);
    let mut source = schema.source.clone();
    source.merge(delta);
    let mut next = reduce_tree_with(&source, &cfg);
    next.version = schema.version + 1;
    next
}

/// Re-applies the grouping rules to an already reduced schema.
pub fn regeneralize(schema: &ReducedSchema) -> ReducedSchema {
    let mut w = WorkNode::from_schema(&schema.root);
    generalize(&mut w, &schema.config);
    ReducedSchema {
        root: finish(String::new(), None, w),
        ..schema.clone()
    }
}

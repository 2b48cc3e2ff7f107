//! OpenAPI 3 export, schema-version diffs and shadow-endpoint reports.

use std::collections::{BTreeMap, BTreeSet};

use percent_encoding::{utf8_percent_encode, AsciiSet, CONTROLS};
use serde::{Deserialize, Serialize};

use crate::reducer::{PlaceholderMeta, ReducedSchema, SchemaNode};
use crate::segment::SegmentClass;
use crate::tree::EndpointMeta;

pub const OPENAPI_VERSION: &str = "3.0.3";

/// Characters escaped in static path labels so that a template parses back
/// to the same segment and never looks like a parameter.
const LABEL_ESCAPE: &AsciiSet = &CONTROLS
    .add(b' ')
    .add(b'"')
    .add(b'#')
    .add(b'%')
    .add(b'/')
    .add(b'<')
    .add(b'>')
    .add(b'?')
    .add(b'`')
    .add(b'{')
    .add(b'}');

const OPERATION_METHODS: [&str; 8] = [
    "get", "put", "post", "delete", "options", "head", "patch", "trace",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenApiDoc {
    pub openapi: String,
    pub info: Info,
    pub paths: BTreeMap<String, PathItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Info {
    pub title: String,
    pub version: String,
    pub description: String,
    #[serde(rename = "x-schema-version")]
    pub schema_version: u64,
    #[serde(rename = "x-generated-at")]
    pub generated_at: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PathItem {
    #[serde(flatten)]
    pub operations: BTreeMap<String, Operation>,
    /// Methods seen in traffic that OpenAPI has no operation key for.
    #[serde(
        rename = "x-unlisted-methods",
        default,
        skip_serializing_if = "Vec::is_empty"
    )]
    pub unlisted_methods: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Operation {
    #[serde(rename = "operationId")]
    pub operation_id: String,
    pub summary: String,
    pub parameters: Vec<Parameter>,
    pub responses: BTreeMap<String, Response>,
    #[serde(rename = "x-observed-requests")]
    pub observed_requests: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    #[serde(rename = "in")]
    pub location: String,
    pub required: bool,
    pub schema: ParamSchema,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub example: Option<serde_json::Value>,
    #[serde(
        rename = "x-observed-examples",
        default,
        skip_serializing_if = "Vec::is_empty"
    )]
    pub observed_examples: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamSchema {
    #[serde(rename = "type")]
    pub ty: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<String>,
    #[serde(rename = "minLength", default, skip_serializing_if = "Option::is_none")]
    pub min_length: Option<usize>,
    #[serde(rename = "maxLength", default, skip_serializing_if = "Option::is_none")]
    pub max_length: Option<usize>,
    #[serde(
        rename = "x-inferred-type",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub inferred_type: Option<SegmentClass>,
    /// Digit-count bounds for integer placeholders, where `minLength` does not apply.
    #[serde(
        rename = "x-min-length",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub x_min_length: Option<usize>,
    #[serde(
        rename = "x-max-length",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub x_max_length: Option<usize>,
    #[serde(
        rename = "x-is-random",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub is_random: Option<bool>,
}

impl OpenApiDoc {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("doc serializes")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("doc serializes")
    }

    pub fn path_count(&self) -> usize {
        self.paths.len()
    }
}

/// Escapes a static label for use inside a path template.
pub fn escape_label(label: &str) -> String {
    utf8_percent_encode(label, LABEL_ESCAPE).to_string()
}

/// OpenAPI parameter name for a placeholder (`{user_param_0}` -> `user_param_0`).
pub fn parameter_name(meta: &PlaceholderMeta) -> String {
    meta.name
        .trim_start_matches('{')
        .trim_end_matches('}')
        .to_string()
}

fn path_param_schema(meta: &PlaceholderMeta) -> ParamSchema {
    let mut s = ParamSchema {
        inferred_type: Some(meta.inferred_type),
        is_random: Some(meta.is_random),
        ..ParamSchema::default()
    };
    match meta.inferred_type {
        SegmentClass::Integer => {
            s.ty = "integer".into();
            s.x_min_length = Some(meta.min_len);
            s.x_max_length = Some(meta.max_len);
        }
        SegmentClass::Uuid => {
            s.ty = "string".into();
            s.format = Some("uuid".into());
        }
        SegmentClass::Email => {
            s.ty = "string".into();
            s.format = Some("email".into());
            s.min_length = Some(meta.min_len);
            s.max_length = Some(meta.max_len);
        }
        other => {
            s.ty = "string".into();
            s.min_length = Some(meta.min_len);
            s.max_length = Some(meta.max_len);
            s.pattern = match other {
                SegmentClass::Hex => Some("^[0-9a-fA-F]+$".into()),
                SegmentClass::AlnumRandom => Some("^[A-Za-z0-9_-]+$".into()),
                _ => None,
            };
        }
    }
    s
}

fn example_value(meta: &PlaceholderMeta) -> Option<serde_json::Value> {
    let first = meta.examples.first()?;
    if meta.inferred_type == SegmentClass::Integer {
        if let Ok(n) = first.parse::<u64>() {
            return Some(n.into());
        }
    }
    Some(first.clone().into())
}

struct Frame<'a> {
    label: String,
    param: Option<(String, &'a PlaceholderMeta)>,
}

/// Emits one path entry per terminal schema node, in sorted key order.
pub fn generate_spec(schema: &ReducedSchema) -> OpenApiDoc {
    let mut paths = BTreeMap::new();
    let mut stack: Vec<Frame> = Vec::new();
    walk(&schema.root, &mut stack, &mut paths);
    OpenApiDoc {
        openapi: OPENAPI_VERSION.into(),
        info: Info {
            title: "Inferred API".into(),
            version: format!("{}", schema.version),
            description: format!(
                "Generated from {} observed requests; descriptions are synthesized from traffic metadata.",
                schema.source_request_count
            ),
            schema_version: schema.version,
            generated_at: schema.created_at,
        },
        paths,
    }
}

fn walk<'a>(
    node: &'a SchemaNode,
    stack: &mut Vec<Frame<'a>>,
    paths: &mut BTreeMap<String, PathItem>,
) {
    if let Some(ep) = &node.endpoint {
        let template = format!(
            "/{}",
            stack
                .iter()
                .map(|f| f.label.as_str())
                .collect::<Vec<_>>()
                .join("/")
        );
        paths.insert(template.clone(), path_item(&template, stack, ep));
    }
    for child in &node.children {
        let frame = match &child.placeholder {
            Some(meta) => {
                let base = parameter_name(meta);
                let mut name = base.clone();
                let mut n = 2;
                while stack
                    .iter()
                    .any(|f| f.param.as_ref().is_some_and(|(p, _)| *p == name))
                {
                    name = format!("{base}_{n}");
                    n += 1;
                }
                Frame {
                    label: format!("{{{name}}}"),
                    param: Some((name, meta)),
                }
            }
            None => Frame {
                label: escape_label(&child.label),
                param: None,
            },
        };
        stack.push(frame);
        walk(child, stack, paths);
        stack.pop();
    }
}

fn path_item(template: &str, stack: &[Frame], ep: &EndpointMeta) -> PathItem {
    let mut params: Vec<Parameter> = stack
        .iter()
        .filter_map(|f| f.param.as_ref())
        .map(|(name, meta)| Parameter {
            name: name.clone(),
            location: "path".into(),
            required: true,
            schema: path_param_schema(meta),
            example: example_value(meta),
            observed_examples: meta.examples.clone(),
        })
        .collect();
    for (key, stats) in &ep.query_params {
        params.push(Parameter {
            name: key.clone(),
            location: "query".into(),
            required: false,
            schema: ParamSchema {
                ty: "string".into(),
                min_length: Some(stats.min_len),
                max_length: Some(stats.max_len),
                ..ParamSchema::default()
            },
            example: stats.examples.first().map(|e| e.clone().into()),
            observed_examples: stats.examples.clone(),
        });
    }
    let mut item = PathItem::default();
    let op_slug: String = template
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect();
    for (method, count) in &ep.methods {
        let lower = method.to_ascii_lowercase();
        if !OPERATION_METHODS.contains(&lower.as_str()) {
            item.unlisted_methods.push(method.clone());
            continue;
        }
        let mut responses = BTreeMap::new();
        responses.insert(
            "default".to_string(),
            Response {
                description: "Response not inferred".into(),
            },
        );
        item.operations.insert(
            lower.clone(),
            Operation {
                operation_id: format!("{lower}{op_slug}"),
                summary: format!("[generated] {method} {template}, seen {count} times"),
                parameters: params.clone(),
                responses,
                observed_requests: *count,
            },
        );
    }
    item
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OperationChange {
    pub path: String,
    pub added_methods: Vec<String>,
    pub removed_methods: Vec<String>,
    pub added_query_params: Vec<String>,
    pub removed_query_params: Vec<String>,
    /// `(parameter, old type, new type)` for retyped placeholders.
    pub retyped_params: Vec<(String, SegmentClass, SegmentClass)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SchemaDiff {
    pub from_version: u64,
    pub to_version: u64,
    pub added_paths: Vec<String>,
    pub removed_paths: Vec<String>,
    pub changed_operations: Vec<OperationChange>,
}

impl SchemaDiff {
    pub fn is_empty(&self) -> bool {
        self.added_paths.is_empty()
            && self.removed_paths.is_empty()
            && self.changed_operations.is_empty()
    }

    pub fn to_text(&self) -> String {
        use std::fmt::Write;
        let mut out = format!(
            "schema diff v{} -> v{}\n",
            self.from_version, self.to_version
        );
        if self.is_empty() {
            out.push_str("  no changes\n");
            return out;
        }
        for p in &self.added_paths {
            let _ = writeln!(out, "  + {p}");
        }
        for p in &self.removed_paths {
            let _ = writeln!(out, "  - {p}");
        }
        for c in &self.changed_operations {
            let _ = writeln!(out, "  ~ {}", c.path);
            for m in &c.added_methods {
                let _ = writeln!(out, "      + method {m}");
            }
            for m in &c.removed_methods {
                let _ = writeln!(out, "      - method {m}");
            }
            for q in &c.added_query_params {
                let _ = writeln!(out, "      + query {q}");
            }
            for q in &c.removed_query_params {
                let _ = writeln!(out, "      - query {q}");
            }
            for (p, a, b) in &c.retyped_params {
                let _ = writeln!(out, "      * {p}: {a} -> {b}");
            }
        }
        out
    }
}

#[derive(Default)]
struct PathFacts {
    methods: BTreeSet<String>,
    query: BTreeSet<String>,
    params: BTreeMap<String, SegmentClass>,
}

fn path_facts(schema: &ReducedSchema) -> BTreeMap<String, PathFacts> {
    let doc = generate_spec(schema);
    let mut out = BTreeMap::new();
    for (path, item) in doc.paths {
        let mut f = PathFacts::default();
        f.methods.extend(item.unlisted_methods.iter().cloned());
        for (m, op) in item.operations {
            f.methods.insert(m.to_ascii_uppercase());
            for p in op.parameters {
                match p.location.as_str() {
                    "query" => {
                        f.query.insert(p.name);
                    }
                    _ => {
                        if let Some(t) = p.schema.inferred_type {
                            f.params.insert(p.name, t);
                        }
                    }
                }
            }
        }
        out.insert(path, f);
    }
    out
}

fn sorted_diff(a: &BTreeSet<String>, b: &BTreeSet<String>) -> Vec<String> {
    a.difference(b).cloned().collect()
}

/// Set differences over templated paths plus per-path method, query and
/// parameter-type deltas. Output lists are sorted.
pub fn diff_specs(old: &ReducedSchema, new: &ReducedSchema) -> SchemaDiff {
    let a = path_facts(old);
    let b = path_facts(new);
    let mut diff = SchemaDiff {
        from_version: old.version,
        to_version: new.version,
        ..SchemaDiff::default()
    };
    diff.added_paths = b.keys().filter(|k| !a.contains_key(*k)).cloned().collect();
    diff.removed_paths = a.keys().filter(|k| !b.contains_key(*k)).cloned().collect();
    for (path, fa) in &a {
        let Some(fb) = b.get(path) else { continue };
        let change = OperationChange {
            path: path.clone(),
            added_methods: sorted_diff(&fb.methods, &fa.methods),
            removed_methods: sorted_diff(&fa.methods, &fb.methods),
            added_query_params: sorted_diff(&fb.query, &fa.query),
            removed_query_params: sorted_diff(&fa.query, &fb.query),
            retyped_params: fa
                .params
                .iter()
                .filter_map(|(n, t)| {
                    fb.params
                        .get(n)
                        .filter(|u| *u != t)
                        .map(|u| (n.clone(), *t, *u))
                })
                .collect(),
        };
        if change
            != (OperationChange {
                path: path.clone(),
                ..OperationChange::default()
            })
        {
            diff.changed_operations.push(change);
        }
    }
    diff
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ShadowReport {
    /// Learned paths with no counterpart in the reference document.
    pub shadow: Vec<String>,
    /// Reference paths never matched by learned traffic.
    pub unexercised: Vec<String>,
}

fn normalize_template(path: &str) -> Vec<String> {
    path.trim_matches('/')
        .split('/')
        .filter(|s| !s.is_empty())
        .map(|s| {
            if s.starts_with('{') && s.ends_with('}') {
                "{}".to_string()
            } else {
                s.to_string()
            }
        })
        .collect()
}

/// A reference parameter matches any learned segment; a learned placeholder
/// only matches a reference parameter.
fn documented_by(learned: &[String], reference: &[String]) -> bool {
    learned.len() == reference.len()
        && learned
            .iter()
            .zip(reference)
            .all(|(l, r)| r == "{}" || l == r)
}

/// Compares learned paths against a user-supplied OpenAPI document (any
/// version whose `paths` object is keyed by templates).
pub fn shadow_report(schema: &ReducedSchema, reference: &serde_json::Value) -> ShadowReport {
    let learned: Vec<(String, Vec<String>)> = generate_spec(schema)
        .paths
        .into_keys()
        .map(|p| {
            let n = normalize_template(&p);
            (p, n)
        })
        .collect();
    let documented: Vec<(String, Vec<String>)> = reference
        .get("paths")
        .and_then(|p| p.as_object())
        .map(|m| {
            m.keys()
                .map(|k| (k.clone(), normalize_template(k)))
                .collect()
        })
        .unwrap_or_default();
    let mut report = ShadowReport::default();
    for (p, n) in &learned {
        if !documented.iter().any(|(_, d)| documented_by(n, d)) {
            report.shadow.push(p.clone());
        }
    }
    for (p, d) in &documented {
        if !learned.iter().any(|(_, n)| documented_by(n, d)) {
            report.unexercised.push(p.clone());
        }
    }
    report.shadow.sort();
    report.unexercised.sort();
    report
}

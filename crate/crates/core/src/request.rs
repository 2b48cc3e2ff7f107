//! Request parsing and content serialization.
//!
//! A [`RawRequest`] is what arrives on the wire (or out of a dataset). Parsing
//! turns it into a [`ParsedRequest`]: uppercase method, percent-decoded path
//! segments, ordered query pairs. Dot segments are kept as-is so traversal
//! payloads reach the validator intact.

use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_METHODS: [&str; 7] = ["GET", "POST", "PUT", "DELETE", "PATCH", "HEAD", "OPTIONS"];

/// Default number of body bytes kept by [`serialize_for_content`].
pub const DEFAULT_BODY_LIMIT: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RawRequest {
    pub method: String,
    pub url: String,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
    pub timestamp: Option<u64>,
    /// Ground truth for evaluation only; never consulted by detection.
    pub label: Option<String>,
}

impl RawRequest {
    pub fn new(method: impl Into<String>, url: impl Into<String>) -> Self {
        Self {
            method: method.into(),
            url: url.into(),
            ..Self::default()
        }
    }

    pub fn header(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.headers.push((name.into(), value.into()));
        self
    }

    pub fn body(mut self, body: impl Into<Vec<u8>>) -> Self {
        self.body = body.into();
        self
    }

    pub fn label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    /// Parses one line of the JSONL ingest format.
    pub fn from_json_line(line: &str) -> Result<Self> {
        let wire: WireRequest = serde_json::from_str(line)?;
        wire.try_into()
    }

    /// Renders this request as one line of the JSONL ingest format. Bodies that
    /// are not valid UTF-8 are written base64-encoded.
    pub fn to_json_line(&self) -> String {
        let (body, body_encoding) = match std::str::from_utf8(&self.body) {
            Ok(s) => (s.to_string(), None),
            Err(_) => (
                base64::engine::general_purpose::STANDARD.encode(&self.body),
                Some("base64".to_string()),
            ),
        };
        let wire = WireRequest {
            method: self.method.clone(),
            url: self.url.clone(),
            headers: WireHeaders::Pairs(self.headers.clone()),
            body,
            body_encoding,
            label: self.label.clone(),
            ts: self.timestamp,
        };
        serde_json::to_string(&wire).expect("request serializes")
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct WireRequest {
    method: String,
    url: String,
    #[serde(default)]
    headers: WireHeaders,
    #[serde(default)]
    body: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    body_encoding: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ts: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum WireHeaders {
    Pairs(Vec<(String, String)>),
    Object(serde_json::Map<String, serde_json::Value>),
}

impl Default for WireHeaders {
    fn default() -> Self {
        WireHeaders::Pairs(Vec::new())
    }
}

impl TryFrom<WireRequest> for RawRequest {
    type Error = Error;

    fn try_from(w: WireRequest) -> Result<Self> {
        let headers = match w.headers {
            WireHeaders::Pairs(p) => p,
            WireHeaders::Object(map) => map
                .into_iter()
                .map(|(k, v)| {
                    let v = match v {
                        serde_json::Value::String(s) => s,
                        other => other.to_string(),
                    };
                    (k, v)
                })
                .collect(),
        };
        let body = match w.body_encoding.as_deref() {
            None | Some("utf8") | Some("utf-8") => w.body.into_bytes(),
            Some("base64") => base64::engine::general_purpose::STANDARD
                .decode(w.body.as_bytes())
                .map_err(|e| Error::Format {
                    line: 0,
                    detail: format!("bad base64 body: {e}"),
                })?,
            Some(other) => {
                return Err(Error::Format {
                    line: 0,
                    detail: format!("unknown body_encoding {other:?}"),
                })
            }
        };
        Ok(RawRequest {
            method: w.method,
            url: w.url,
            headers,
            body,
            timestamp: w.ts,
            label: w.label,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ParsedRequest {
    pub method: String,
    pub segments: Vec<String>,
    pub query: Vec<(String, String)>,
    pub headers: Vec<(String, String)>,
    #[serde(default)]
    pub body: Vec<u8>,
}

impl ParsedRequest {
    /// `"/" + segments.join("/")`.
    pub fn normalized_path(&self) -> String {
        format!("/{}", self.segments.join("/"))
    }
}

/// Splits a raw request into method, decoded path segments and query pairs.
///
/// Repeated slashes collapse, a trailing slash is dropped and the path is
/// percent-decoded exactly once. A bad escape, a control byte or a decoded
/// path that is not UTF-8 yields [`Error::MalformedUrl`] with the byte offset
/// into `raw.url`.
pub fn parse_request(raw: &RawRequest) -> Result<ParsedRequest> {
    let url = raw.url.as_str();
    if url.is_empty() {
        return Err(malformed(0, "empty url"));
    }
    let start = authority_end(url);
    let rest = &url[start..];
    let rest = rest.split_once('#').map_or(rest, |(r, _)| r);
    let (path, query) = match rest.split_once('?') {
        Some((p, q)) => (p, Some(q)),
        None => (rest, None),
    };

    let decoded = decode_path(path, start)?;
    let segments = decoded
        .split('/')
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect();

    let query = query.map(parse_query).unwrap_or_default();

    Ok(ParsedRequest {
        method: raw.method.trim().to_ascii_uppercase(),
        segments,
        query,
        headers: raw.headers.clone(),
        body: raw.body.clone(),
    })
}

fn malformed(offset: usize, detail: impl Into<String>) -> Error {
    Error::MalformedUrl {
        offset,
        detail: detail.into(),
    }
}

/// Byte index where the path starts once any `scheme://authority` is skipped.
fn authority_end(url: &str) -> usize {
    let Some(idx) = url.find("://") else {
        return 0;
    };
    let scheme = &url[..idx];
    let valid_scheme = !scheme.is_empty()
        && scheme.starts_with(|c: char| c.is_ascii_alphabetic())
        && scheme
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.'));
    if !valid_scheme {
        return 0;
    }
    let after = idx + 3;
    match url[after..].find(['/', '?', '#']) {
        Some(p) => after + p,
        None => url.len(),
    }
}

fn is_control(b: u8) -> bool {
    b < 0x20 || b == 0x7f
}

fn hex_val(b: u8) -> Option<u8> {
    match b {
        b'0'..=b'9' => Some(b - b'0'),
        b'a'..=b'f' => Some(b - b'a' + 10),
        b'A'..=b'F' => Some(b - b'A' + 10),
        _ => None,
    }
}

fn decode_path(path: &str, base: usize) -> Result<String> {
    let bytes = path.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        if is_control(b) {
            return Err(malformed(
                base + i,
                format!("control byte 0x{b:02x} in path"),
            ));
        }
        if b == b'%' {
            let hi = bytes.get(i + 1).copied().and_then(hex_val);
            let lo = bytes.get(i + 2).copied().and_then(hex_val);
            match (hi, lo) {
                (Some(h), Some(l)) => {
                    let d = h << 4 | l;
                    if is_control(d) {
                        return Err(malformed(
                            base + i,
                            format!("encoded control byte 0x{d:02x} in path"),
                        ));
                    }
                    out.push(d);
                    i += 3;
                }
                _ => return Err(malformed(base + i, "invalid percent escape")),
            }
        } else {
            out.push(b);
            i += 1;
        }
    }
    String::from_utf8(out).map_err(|e| {
        malformed(
            base + e.utf8_error().valid_up_to(),
            "decoded path is not valid utf-8",
        )
    })
}

/// Lenient form decoding for query components: `+` is a space, malformed
/// escapes are kept literally.
fn decode_component(s: &str) -> String {
    let replaced = s.replace('+', " ");
    percent_encoding::percent_decode_str(&replaced)
        .decode_utf8_lossy()
        .into_owned()
}

fn parse_query(q: &str) -> Vec<(String, String)> {
    q.split('&')
        .filter(|p| !p.is_empty())
        .map(|pair| match pair.split_once('=') {
            Some((k, v)) => (decode_component(k), decode_component(v)),
            None => (decode_component(pair), String::new()),
        })
        .collect()
}

/// The `H:key=val QP:param=val B:{body}` text fed to the feature hasher.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SerializedContent {
    pub text: String,
    pub truncated: bool,
}

pub fn serialize_for_content(req: &ParsedRequest, body_limit: usize) -> SerializedContent {
    let mut headers: Vec<(String, &str)> = req
        .headers
        .iter()
        .map(|(k, v)| (k.to_ascii_lowercase(), v.as_str()))
        .collect();
    headers.sort_by(|a, b| a.0.cmp(&b.0));

    let mut text = String::new();
    for (k, v) in &headers {
        text.push_str("H:");
        text.push_str(k);
        text.push('=');
        text.push_str(v);
        text.push(' ');
    }
    for (k, v) in &req.query {
        text.push_str("QP:");
        text.push_str(k);
        text.push('=');
        text.push_str(v);
        text.push(' ');
    }
    let truncated = req.body.len() > body_limit;
    let body = &req.body[..req.body.len().min(body_limit)];
    text.push_str("B:");
    text.push_str(&String::from_utf8_lossy(body));
    SerializedContent { text, truncated }
}

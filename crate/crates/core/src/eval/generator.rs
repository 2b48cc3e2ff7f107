//! Synthetic traffic in the style of an attack-labeled API dataset: benign
//! requests drawn from endpoint templates, plus attacks embedded either in
//! the URL (typed path slots or the query string) or in a header or body
//! field of an otherwise valid request.

use percent_encoding::{utf8_percent_encode, NON_ALPHANUMERIC};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::payloads::{self, Mutation};
use super::{attack_label, AttackSpec, AttackTag, LabeledCorpus, Placement, BENIGN_LABEL};
use crate::request::RawRequest;
use crate::segment::{classify_segment, SegmentClass};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotKind {
    Int,
    Uuid,
    Hex,
    Email,
}

impl SlotKind {
    pub fn class(self) -> SegmentClass {
        match self {
            SlotKind::Int => SegmentClass::Integer,
            SlotKind::Uuid => SegmentClass::Uuid,
            SlotKind::Hex => SegmentClass::Hex,
            SlotKind::Email => SegmentClass::Email,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PathPart {
    Lit(String),
    Slot(SlotKind),
}

/// One endpoint: method, path with typed slots, and bounded vocabularies for
/// query and JSON body fields.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EndpointTemplate {
    pub method: String,
    pub path: Vec<PathPart>,
    pub query: Vec<(String, Vec<String>)>,
    pub body: Vec<(String, Vec<String>)>,
}

impl EndpointTemplate {
    /// `"GET /users/{int}/orders"`; slots are `{int}`, `{uuid}`, `{hex}`, `{email}`.
    pub fn parse(spec: &str) -> Self {
        let (method, path) = spec.split_once(' ').unwrap_or(("GET", spec));
        let path = path
            .split('/')
            .filter(|s| !s.is_empty())
            .map(|s| match s {
                "{int}" => PathPart::Slot(SlotKind::Int),
                "{uuid}" => PathPart::Slot(SlotKind::Uuid),
                "{hex}" => PathPart::Slot(SlotKind::Hex),
                "{email}" => PathPart::Slot(SlotKind::Email),
                lit => PathPart::Lit(lit.to_string()),
            })
            .collect();
        Self {
            method: method.to_ascii_uppercase(),
            path,
            query: Vec::new(),
            body: Vec::new(),
        }
    }

    pub fn query(mut self, key: &str, values: &[&str]) -> Self {
        self.query
            .push((key.into(), values.iter().map(|v| v.to_string()).collect()));
        self
    }

    pub fn body(mut self, key: &str, values: &[&str]) -> Self {
        self.body
            .push((key.into(), values.iter().map(|v| v.to_string()).collect()));
        self
    }

    pub fn slots(&self) -> Vec<usize> {
        self.path
            .iter()
            .enumerate()
            .filter_map(|(i, p)| matches!(p, PathPart::Slot(_)).then_some(i))
            .collect()
    }
}

pub fn default_templates() -> Vec<EndpointTemplate> {
    let t = EndpointTemplate::parse;
    vec![
        t("GET /api/v1/users/{int}").query("fields", &["basic", "full"]),
        t("GET /api/v1/users/{int}/orders")
            .query("page", &["1", "2", "3"])
            .query("sort", &["asc", "desc"]),
        t("GET /api/v1/orders/{uuid}"),
        t("PUT /api/v1/orders/{uuid}/status")
            .body("status", &["shipped", "cancelled", "delivered"]),
        t("GET /api/v1/products/{int}/reviews").query("limit", &["10", "20", "50"]),
        t("POST /api/v1/products/{int}/reviews")
            .body("rating", &["3", "4", "5"])
            .body("comment", &["great", "ok", "fast delivery"]),
        t("GET /api/v1/files/{hex}"),
        t("DELETE /api/v1/files/{hex}"),
        t("GET /api/v1/accounts/{email}/profile"),
        t("POST /api/v1/accounts/{email}/settings")
            .body("theme", &["dark", "light"])
            .body("language", &["en", "de", "fr"]),
        t("GET /api/v1/catalog/categories").query("lang", &["en", "de", "fr"]),
        t("POST /api/v1/auth/login")
            .body("username", &["alice", "bob", "carol", "dave"])
            .body("remember", &["true", "false"]),
        t("POST /api/v1/auth/logout"),
        t("GET /api/v1/search")
            .query("q", &["shoes", "laptop", "coffee", "lamp"])
            .query("page", &["1", "2"]),
        t("GET /api/v2/inventory/{int}/items/{int}"),
        t("POST /api/v2/carts/{uuid}/items")
            .body("sku", &["A-100", "B-200", "C-300"])
            .body("quantity", &["1", "2", "3"]),
        t("GET /api/v2/shipments/{hex}/tracking"),
        t("GET /health"),
    ]
}

/// Client profiles: each fixes the user agent, language and session cookie.
const PROFILES: [(&str, &str, &str); 5] = [
    (
        "Mozilla/5.0 (Windows NT 10.0; Win64; x64) AppleWebKit/537.36 Chrome/120.0",
        "en-US,en;q=0.9",
        "session=7f3a9c2e",
    ),
    (
        "Mozilla/5.0 (Macintosh; Intel Mac OS X 14_2) Safari/605.1.15",
        "en-GB,en;q=0.8",
        "session=1b8d4e6f",
    ),
    ("okhttp/4.12.0", "de-DE", "session=9c0e2a7b"),
    ("python-requests/2.31.0", "en", "session=4d6f8a1c"),
    ("curl/8.5.0", "fr-FR", "session=e2b7c9d0"),
];

const HOST: &str = "api.shop.example";

const FIRST: [&str; 10] = [
    "alice", "bob", "carol", "dave", "erin", "frank", "grace", "heidi", "ivan", "judy",
];
const LAST: [&str; 8] = [
    "smith", "jones", "brown", "lee", "garcia", "miller", "davis", "wilson",
];
const DOMAINS: [&str; 3] = ["example.com", "mail.example.org", "corp.example.net"];

fn slot_value<R: Rng>(kind: SlotKind, rng: &mut R) -> String {
    match kind {
        SlotKind::Int => rng.random_range(1..=99_999u32).to_string(),
        SlotKind::Uuid => {
            let b: [u8; 16] = rng.random();
            let h: String = b.iter().map(|x| format!("{x:02x}")).collect();
            format!(
                "{}-{}-4{}-a{}-{}",
                &h[0..8],
                &h[8..12],
                &h[13..16],
                &h[17..20],
                &h[20..32]
            )
        }
        SlotKind::Hex => (0..16)
            .map(|_| format!("{:x}", rng.random_range(0..16u8)))
            .collect(),
        SlotKind::Email => format!(
            "{}.{}@{}",
            FIRST.choose(rng).unwrap(),
            LAST.choose(rng).unwrap(),
            DOMAINS.choose(rng).unwrap()
        ),
    }
}

/// Where an attack payload was placed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InjectionSite {
    /// Index into the template's path parts.
    PathSlot(usize),
    /// The payload is a query key of its own.
    Query,
    BodyField(String),
    Header(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Injection {
    pub tag: AttackTag,
    pub placement: Placement,
    pub site: InjectionSite,
    /// The payload after mutation, exactly as it appears once the URL is
    /// decoded (or verbatim in the header or body).
    pub payload: String,
    pub mutation: Mutation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub benign_train: usize,
    pub benign_test: usize,
    pub attacks: Vec<AttackSpec>,
    pub seed: u64,
}

impl GeneratorConfig {
    /// 10,000 benign training requests, 2,000 benign test requests and
    /// 1,400 attacks per tag at `placement`.
    pub fn standard(placement: Placement, seed: u64) -> Self {
        Self {
            benign_train: 10_000,
            benign_test: 2_000,
            attacks: AttackTag::ALL
                .iter()
                .map(|&tag| AttackSpec {
                    tag,
                    placement,
                    count: 1_400,
                })
                .collect(),
            seed,
        }
    }
}

struct Draft {
    method: String,
    segments: Vec<String>,
    query: Vec<(String, String)>,
    headers: Vec<(String, String)>,
    body: Vec<(String, String)>,
}

impl Draft {
    fn benign<R: Rng>(t: &EndpointTemplate, rng: &mut R) -> Self {
        let (ua, lang, cookie) = *PROFILES.choose(rng).unwrap();
        let mut headers = vec![
            ("host".to_string(), HOST.to_string()),
            ("user-agent".to_string(), ua.to_string()),
            ("accept".to_string(), "application/json".to_string()),
            ("accept-language".to_string(), lang.to_string()),
            ("cookie".to_string(), cookie.to_string()),
        ];
        if !t.body.is_empty() {
            headers.push(("content-type".to_string(), "application/json".to_string()));
        }
        Self {
            method: t.method.clone(),
            segments: t
                .path
                .iter()
                .map(|p| match p {
                    PathPart::Lit(l) => utf8_percent_encode(l, NON_ALPHANUMERIC).to_string(),
                    PathPart::Slot(k) => {
                        utf8_percent_encode(&slot_value(*k, rng), NON_ALPHANUMERIC).to_string()
                    }
                })
                .collect(),
            query: t
                .query
                .iter()
                .map(|(k, vs)| (k.clone(), vs.choose(rng).unwrap().clone()))
                .collect(),
            headers,
            body: t
                .body
                .iter()
                .map(|(k, vs)| (k.clone(), vs.choose(rng).unwrap().clone()))
                .collect(),
        }
    }

    fn into_request(
        self,
        raw_query_tail: Option<String>,
        raw_body_field: Option<(usize, String)>,
    ) -> RawRequest {
        let mut url = format!("/{}", self.segments.join("/"));
        let mut pairs: Vec<String> = self
            .query
            .iter()
            .map(|(k, v)| {
                format!(
                    "{}={}",
                    utf8_percent_encode(k, NON_ALPHANUMERIC),
                    utf8_percent_encode(v, NON_ALPHANUMERIC)
                )
            })
            .collect();
        pairs.extend(raw_query_tail);
        if !pairs.is_empty() {
            url.push('?');
            url.push_str(&pairs.join("&"));
        }
        let mut req = RawRequest::new(self.method, url);
        req.headers = self.headers;
        if !self.body.is_empty() {
            // Python-style separators so field values are separate tokens
            let fields: Vec<String> = self
                .body
                .iter()
                .enumerate()
                .map(|(i, (k, v))| {
                    let value = match &raw_body_field {
                        Some((j, raw)) if *j == i => format!("\"{raw}\""),
                        _ => serde_json::to_string(v).expect("string serializes"),
                    };
                    format!(
                        "{}: {}",
                        serde_json::to_string(k).expect("string serializes"),
                        value
                    )
                })
                .collect();
            req.body = format!("{{{}}}", fields.join(", ")).into_bytes();
        }
        req
    }
}

fn first_piece(payload: &str) -> Option<&str> {
    payload.split('/').find(|p| !p.is_empty())
}

fn url_attack<R: Rng>(
    t: &EndpointTemplate,
    tag: AttackTag,
    rng: &mut R,
) -> (RawRequest, Injection) {
    let mut d = Draft::benign(t, rng);
    let (payload, mutation) = payloads::draw(tag, rng);
    let slots = t.slots();
    let slot = (!slots.is_empty() && rng.random_bool(0.8)).then(|| *slots.choose(rng).unwrap());
    // a payload piece the slot type would accept is not a structural anomaly
    let slot = slot.filter(|&i| match (&t.path[i], first_piece(&payload)) {
        (PathPart::Slot(k), Some(p)) => !k.class().admits(classify_segment(p), p),
        _ => false,
    });
    let encoded = utf8_percent_encode(&payload, NON_ALPHANUMERIC).to_string();
    let (req, site) = match slot {
        Some(i) => {
            d.segments[i] = encoded;
            (d.into_request(None, None), InjectionSite::PathSlot(i))
        }
        None => (d.into_request(Some(encoded), None), InjectionSite::Query),
    };
    let inj = Injection {
        tag,
        placement: Placement::UrlEmbedded,
        site,
        payload,
        mutation,
    };
    (req.label(attack_label(tag, Placement::UrlEmbedded)), inj)
}

fn body_header_attack<R: Rng>(
    t: &EndpointTemplate,
    tag: AttackTag,
    rng: &mut R,
) -> (RawRequest, Injection) {
    let mut d = Draft::benign(t, rng);
    let (payload, mutation) = payloads::draw(tag, rng);
    let (req, site) = if tag == AttackTag::CookieInjection {
        set_header(&mut d.headers, "cookie", &payload);
        (
            d.into_request(None, None),
            InjectionSite::Header("cookie".into()),
        )
    } else if !t.body.is_empty() {
        let i = rng.random_range(0..t.body.len());
        let field = t.body[i].0.clone();
        (
            d.into_request(None, Some((i, payload.clone()))),
            InjectionSite::BodyField(field),
        )
    } else {
        set_header(&mut d.headers, "user-agent", &payload);
        (
            d.into_request(None, None),
            InjectionSite::Header("user-agent".into()),
        )
    };
    let inj = Injection {
        tag,
        placement: Placement::BodyHeaderEmbedded,
        site,
        payload,
        mutation,
    };
    (
        req.label(attack_label(tag, Placement::BodyHeaderEmbedded)),
        inj,
    )
}

fn set_header(headers: &mut [(String, String)], name: &str, value: &str) {
    for (k, v) in headers.iter_mut() {
        if k == name {
            *v = value.to_string();
        }
    }
}

/// Deterministic under `cfg.seed`. The test split is shuffled.
pub fn generate_corpus(templates: &[EndpointTemplate], cfg: &GeneratorConfig) -> LabeledCorpus {
    assert!(
        !templates.is_empty(),
        "at least one endpoint template is required"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let benign = |rng: &mut ChaCha8Rng| {
        let t = templates.choose(rng).unwrap();
        Draft::benign(t, rng)
            .into_request(None, None)
            .label(BENIGN_LABEL)
    };
    let train: Vec<RawRequest> = (0..cfg.benign_train).map(|_| benign(&mut rng)).collect();
    let mut test: Vec<(RawRequest, Option<Injection>)> = (0..cfg.benign_test)
        .map(|_| (benign(&mut rng), None))
        .collect();
    for spec in &cfg.attacks {
        for _ in 0..spec.count {
            let t = templates.choose(&mut rng).unwrap();
            let (r, inj) = match spec.placement {
                Placement::UrlEmbedded => url_attack(t, spec.tag, &mut rng),
                Placement::BodyHeaderEmbedded => body_header_attack(t, spec.tag, &mut rng),
            };
            test.push((r, Some(inj)));
        }
    }
    test.shuffle(&mut rng);
    let (test, injections) = test.into_iter().unzip();
    LabeledCorpus {
        train,
        test,
        injections,
    }
}

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Accepted,
    Anomalous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Structural,
    Content,
    None,
}

/// Why a request was flagged. Each code has exactly one trigger:
///
/// - `UnknownRootPath`: the first segment matches no root-level node.
/// - `UnknownSegment`: a later segment matches no child and the node has no
///   placeholder children.
/// - `TypeMismatch`: a placeholder child rejects the segment's class.
/// - `LengthOutOfRange`: a placeholder admits the class but not the length.
/// - `UndocumentedMethod`: the method is outside the allow-set or not learned
///   at the endpoint (or the path ends on a node with no endpoint).
/// - `UndocumentedQueryParam`: a query key never seen at the endpoint.
/// - `MalformedUrl`: the URL failed to parse.
/// - `ContentReconstructionError`: autoencoder score above the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ReasonCode {
    UnknownSegment,
    TypeMismatch,
    LengthOutOfRange,
    UndocumentedQueryParam,
    UndocumentedMethod,
    UnknownRootPath,
    MalformedUrl,
    ContentReconstructionError,
}

impl ReasonCode {
    pub const ALL: [ReasonCode; 8] = [
        ReasonCode::UnknownSegment,
        ReasonCode::TypeMismatch,
        ReasonCode::LengthOutOfRange,
        ReasonCode::UndocumentedQueryParam,
        ReasonCode::UndocumentedMethod,
        ReasonCode::UnknownRootPath,
        ReasonCode::MalformedUrl,
        ReasonCode::ContentReconstructionError,
    ];
}

impl std::fmt::Display for ReasonCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        std::fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reason {
    pub code: ReasonCode,
    /// Path prefix (templated) up to the failure point.
    pub location: String,
    /// Offending token: segment, method or query key.
    pub token: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub outcome: Outcome,
    pub stage: Stage,
    pub reasons: Vec<Reason>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema_version: Option<u64>,
    #[serde(default)]
    pub blocked: bool,
}

impl Verdict {
    pub fn accepted() -> Self {
        Self {
            outcome: Outcome::Accepted,
            stage: Stage::None,
            reasons: Vec::new(),
            score: None,
            schema_version: None,
            blocked: false,
        }
    }

    pub fn anomalous(stage: Stage, reason: Reason) -> Self {
        Self {
            outcome: Outcome::Anomalous,
            stage,
            reasons: vec![reason],
            score: None,
            schema_version: None,
            blocked: false,
        }
    }

    pub fn is_anomalous(&self) -> bool {
        self.outcome == Outcome::Anomalous
    }

    pub fn primary_reason(&self) -> Option<ReasonCode> {
        self.reasons.first().map(|r| r.code)
    }
}

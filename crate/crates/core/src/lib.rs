//! Unsupervised API security: learn an API's structure from traffic, reduce
//! it to a typed schema, export OpenAPI, and flag requests that break the
//! structure or whose content an autoencoder cannot reconstruct.

pub mod autoencoder;
pub mod config;
pub mod engine;
pub mod error;
pub mod eval;
pub mod graph;
pub mod hashing;
pub mod openapi;
pub mod reducer;
pub mod request;
pub mod segment;
pub mod stats;
pub mod tree;
pub mod value_stats;
pub mod verdict;

pub use config::EngineConfig;
pub use engine::{Engine, IngestOutcome, Phase};
pub use error::{Error, Result};
pub use request::{parse_request, ParsedRequest, RawRequest};
pub use verdict::{ReasonCode, Stage, Verdict};

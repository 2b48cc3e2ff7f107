//! Engine configuration, loadable from TOML.
//!
//! ```toml
//! merge_threshold = 3
//! length_slack = 0.5
//! allow_extra_query = false
//! body_limit = 4096
//! hash_seed = 0
//!
//! [ae]
//! seed = 42
//! epochs = 20
//! batch_size = 128
//! ```
//!
//! Every key is optional.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autoencoder::{TrainConfig, DEFAULT_PERCENTILE};
use crate::error::{Error, Result};
use crate::graph::TolerancePolicy;
use crate::reducer::{ReduceConfig, DEFAULT_MERGE_THRESHOLD};
use crate::request::{DEFAULT_BODY_LIMIT, DEFAULT_METHODS};
use crate::value_stats::DEFAULT_EXAMPLE_CAP;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub merge_threshold: usize,
    /// Static children seen in fewer than this fraction of their parent's
    /// traffic are dropped during reduction. 0 keeps everything.
    pub min_hit_fraction: f64,
    pub length_slack: f64,
    pub allow_extra_query: bool,
    pub strict_types: bool,
    pub allowed_methods: Vec<String>,
    pub body_limit: usize,
    pub example_cap: usize,
    pub hash_seed: u64,
    pub threshold_percentile: f64,
    /// Mark anomalous verdicts as blocked (inline deployments).
    pub inline_blocking: bool,
    /// Keep schema history across resets.
    pub archive_history: bool,
    /// Most recent classify latencies kept for the summary.
    pub latency_window: usize,
    pub ae: AeConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AeConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for AeConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            seed: t.seed,
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
        }
    }
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            merge_threshold: DEFAULT_MERGE_THRESHOLD,
            min_hit_fraction: 0.0,
            length_slack: TolerancePolicy::default().length_slack,
            allow_extra_query: false,
            strict_types: true,
            allowed_methods: DEFAULT_METHODS.iter().map(|m| m.to_string()).collect(),
            body_limit: DEFAULT_BODY_LIMIT,
            example_cap: DEFAULT_EXAMPLE_CAP,
            hash_seed: 0,
            threshold_percentile: DEFAULT_PERCENTILE,
            inline_blocking: false,
            archive_history: false,
            latency_window: 1_000_000,
            ae: AeConfig::default(),
        }
    }
}

impl EngineConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: EngineConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.merge_threshold < 2 {
            return Err(Error::Config("merge_threshold must be >= 2".into()));
        }
        if self.ae.epochs == 0 || self.ae.batch_size == 0 {
            return Err(Error::Config(
                "ae.epochs and ae.batch_size must be >= 1".into(),
            ));
        }
        if !(0.0..=100.0).contains(&self.threshold_percentile) {
            return Err(Error::Config(
                "threshold_percentile must be in [0, 100]".into(),
            ));
        }
        if self.length_slack < 0.0 {
            return Err(Error::Config("length_slack must be >= 0".into()));
        }
        Ok(())
    }

    pub fn reduce_config(&self) -> ReduceConfig {
        ReduceConfig {
            merge_threshold: self.merge_threshold,
            min_hit_fraction: self.min_hit_fraction,
        }
    }

    pub fn tolerance(&self) -> TolerancePolicy {
        TolerancePolicy {
            length_slack: self.length_slack,
            allow_extra_query: self.allow_extra_query,
            strict_types: self.strict_types,
            allowed_methods: self
                .allowed_methods
                .iter()
                .map(|m| m.to_ascii_uppercase())
                .collect(),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.ae.seed,
            epochs: self.ae.epochs,
            batch_size: self.ae.batch_size,
            learning_rate: self.ae.learning_rate,
            ..TrainConfig::default()
        }
    }
}

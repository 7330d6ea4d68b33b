//! Run configuration file (`run.toml`).
//!
//! ```toml
//! [graph]
//! session_gap_ms = 1800000
//!
//! [engage]
//! v_high = 0.7
//! a_high = 0.7
//! v_normal = 0.4
//! a_normal = 0.5
//!
//! [split]
//! seed = 0
//! ratios = [0.8, 0.1, 0.1]
//! mode = "edge"            # or "user"
//!
//! [sample]
//! fanouts = [4, 2]
//! batch_size = 64
//!
//! [train]
//! epochs = 30
//! learning_rate = 0.001
//! beta1 = 0.9
//! beta2 = 0.999
//! eps = 1e-8
//! runs = 5
//! seed = 0
//!
//! [model]
//! hidden_dim = 64
//! out_dim = 4
//! embed_dim = 16
//! num_layers = 2
//! use_edge_weights = true
//! ```
//!
//! Every key is optional; missing keys take the values above. Unknown keys
//! are rejected.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engage::EngagementThresholds;
use crate::graph::GraphConfig;
use crate::ingest::DEFAULT_SESSION_GAP_MS;
use crate::model::ModelConfig;
use crate::split::SplitConfig;
use crate::train::TrainConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphSection {
    pub session_gap_ms: i64,
}

impl Default for GraphSection {
    fn default() -> Self {
        Self {
            session_gap_ms: DEFAULT_SESSION_GAP_MS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSection {
    pub fanouts: Vec<usize>,
    pub batch_size: usize,
}

impl Default for SampleSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            fanouts: t.fanouts,
            batch_size: t.batch_size,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub runs: usize,
    pub seed: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            beta1: t.beta1,
            beta2: t.beta2,
            eps: t.eps,
            runs: t.runs,
            seed: t.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub graph: GraphSection,
    pub engage: EngagementThresholds,
    pub split: SplitConfig,
    pub sample: SampleSection,
    pub train: TrainSection,
    pub model: ModelConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Sets both the training and the split seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.train.seed = seed;
        self.split.seed = seed;
        self
    }

    pub fn graph_config(&self) -> GraphConfig {
        GraphConfig {
            session_gap_ms: self.graph.session_gap_ms,
            engage: self.engage,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            learning_rate: self.train.learning_rate,
            batch_size: self.sample.batch_size,
            beta1: self.train.beta1,
            beta2: self.train.beta2,
            eps: self.train.eps,
            runs: self.train.runs,
            seed: self.train.seed,
            fanouts: self.sample.fanouts.clone(),
        }
    }
}

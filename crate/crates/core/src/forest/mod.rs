//! Vertical federated random forest over encrypted label statistics.

pub mod master;
pub mod model;
pub mod party;
mod quantile;
mod split;
mod stats;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::derive_seed;

pub use master::{predict_forest, ForestTrainer, NodeOutcome, NodeTrace};
pub use model::{read_records, write_records, ForestModel, SplitRecord, Tree, TreeNode, RECORDS_FILE};
pub use quantile::{bin_of, cut_points};
pub use split::{find_best_split, split_score, PartyStats, SplitDecision};
pub use stats::{
    decrypt_stats, encrypted_stats, forward, plain_stats, read_stats, sample_features, write_stats,
    FeatureStats,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub epsilon: f64,
    /// Quantile count per feature.
    pub quantiles: usize,
    /// Fraction of samples drawn without replacement per tree.
    pub subsample: f64,
    pub key_bits: u32,
    pub allow_insecure_keys: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 10,
            max_depth: 6,
            min_leaf: 5,
            epsilon: 1e-7,
            quantiles: 32,
            subsample: 0.8,
            key_bits: 1024,
            allow_insecure_keys: false,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: String| Err(Error::Config(format!("forest.{field}: {why}")));
        if self.n_trees == 0 {
            return bad("n_trees", "must be at least 1".into());
        }
        if self.max_depth > 30 {
            return bad("max_depth", format!("must be at most 30, got {}", self.max_depth));
        }
        if self.min_leaf == 0 {
            return bad("min_leaf", "must be at least 1".into());
        }
        if !(self.epsilon >= 0.0) {
            return bad("epsilon", format!("must be >= 0, got {}", self.epsilon));
        }
        if self.quantiles == 0 {
            return bad("quantiles", "must be at least 1".into());
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return bad("subsample", format!("must be in (0, 1], got {}", self.subsample));
        }
        match self.key_bits {
            1024 | 2048 => {}
            64 if self.allow_insecure_keys => {}
            64 => return bad("key_bits", "64-bit keys need allow_insecure_keys".into()),
            other => return bad("key_bits", format!("must be 64, 1024 or 2048, got {other}")),
        }
        Ok(())
    }

    /// Node budget per tree.
    pub fn node_budget(&self) -> usize {
        1usize << (self.max_depth + 1)
    }
}

pub(crate) fn keygen_seed(seed: u64) -> u64 {
    derive_seed("forest.keygen", seed, &[])
}

pub(crate) fn encrypt_seed(seed: u64) -> u64 {
    derive_seed("forest.encrypt", seed, &[])
}

pub fn subsample_seed(seed: u64, tree: usize) -> u64 {
    derive_seed("forest.sample", seed, &[tree as u64])
}

/// Seed of party `party`'s feature subsample at `(tree, node)`.
pub fn feature_seed(seed: u64, tree: usize, node: usize, party: usize) -> u64 {
    derive_seed("forest.features", seed, &[tree as u64, node as u64, party as u64])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(ForestConfig::default().validate().is_ok());
        let cfg = ForestConfig {
            key_bits: 64,
            ..ForestConfig::default()
        };
        assert!(cfg.validate().unwrap_err().to_string().contains("forest.key_bits"));
        let cfg = ForestConfig {
            subsample: 0.0,
            ..ForestConfig::default()
        };
        assert!(cfg.validate().is_err());
        assert_eq!(ForestConfig::default().node_budget(), 128);
    }
}

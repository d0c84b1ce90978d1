//! Federated kernel binary classification with per-party random Fourier features and
//! block-coordinate ridge updates.

pub mod master;
pub mod party;
mod rff;
mod solve;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::derive_seed;
use crate::wire::Body;

pub use master::{predict_kernel, KernelHistory, KernelTrainer, StopReason};
pub use rff::{sample_rff, Normalization, RffMap};
pub use solve::{local_solve, master_aggregate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    /// Random features per party.
    #[serde(rename = "D")]
    pub features: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub t_max: usize,
    pub tol: f64,
    pub seed: u64,
    pub normalization: Normalization,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            features: 256,
            gamma: 1.0,
            lambda: 1e-3,
            t_max: 50,
            tol: 1e-8,
            seed: 0,
            normalization: Normalization::Standard,
        }
    }
}

impl KernelConfig {
    /// Checks ranges; errors name the offending field.
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: String| Err(Error::Config(format!("kernel.{field}: {why}")));
        if self.features == 0 {
            return bad("D", "must be at least 1".into());
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad("gamma", format!("must be positive, got {}", self.gamma));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda", format!("must be >= 0, got {}", self.lambda));
        }
        if !(self.tol >= 0.0) {
            return bad("tol", format!("must be >= 0, got {}", self.tol));
        }
        Ok(())
    }

    pub(crate) fn write_to(&self, body: &mut Body) {
        body.insert("D", self.features as i64);
        body.insert("gamma", self.gamma);
        body.insert("lambda", self.lambda);
        body.insert("seed", self.seed as i64);
        body.insert("normalization", self.normalization.as_str());
    }

    pub(crate) fn read_from(body: &Body) -> Result<Self> {
        Ok(Self {
            features: body.index("D")?,
            gamma: body.float("gamma")?,
            lambda: body.float("lambda")?,
            seed: body.int("seed")? as u64,
            normalization: body.str("normalization")?.parse()?,
            ..Self::default()
        })
    }
}

/// Seed of party `index`'s feature map.
pub fn party_seed(seed: u64, index: usize) -> u64 {
    derive_seed("kernel.rff", seed, &[index as u64])
}

/// Coordinator-side model manifest. Weights stay with the parties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelModel {
    pub algorithm: String,
    pub parties: Vec<String>,
    #[serde(rename = "D")]
    pub features: usize,
    pub gamma: f64,
    pub seed: u64,
    pub normalization: Normalization,
    pub lambda: f64,
    pub iterations: usize,
}

impl KernelModel {
    pub fn config(&self) -> KernelConfig {
        KernelConfig {
            features: self.features,
            gamma: self.gamma,
            lambda: self.lambda,
            seed: self.seed,
            normalization: self.normalization,
            ..KernelConfig::default()
        }
    }
}

pub const WEIGHTS_FILE: &str = "kernel_weights.bin";

/// Little-endian binary64 values, back to back.
pub fn write_weights(path: &Path, weights: &[f64]) -> Result<()> {
    let bytes: Vec<u8> = weights.iter().flat_map(|w| w.to_le_bytes()).collect();
    std::fs::write(path, bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn read_weights(path: &Path) -> Result<Vec<f64>> {
    let bytes =
        std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Config(format!(
            "{}: {} bytes is not a whole number of f64 values",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(WEIGHTS_FILE);
        let w = vec![1.5, -0.0, f64::MIN_POSITIVE, 3e300];
        write_weights(&path, &w).unwrap();
        assert_eq!(read_weights(&path).unwrap(), w);
        std::fs::write(&path, [0u8; 5]).unwrap();
        assert!(read_weights(&path).is_err());
    }

    #[test]
    fn config_body_round_trip() {
        let cfg = KernelConfig {
            seed: u64::MAX - 3,
            normalization: Normalization::PaperLiteral,
            ..KernelConfig::default()
        };
        let mut body = Body::new();
        cfg.write_to(&mut body);
        let back = KernelConfig::read_from(&body).unwrap();
        assert_eq!(back.seed, cfg.seed);
        assert_eq!(back.normalization, cfg.normalization);
        assert_eq!(back.features, cfg.features);
    }

    #[test]
    fn validation_names_fields() {
        let cfg = KernelConfig {
            gamma: -1.0,
            ..KernelConfig::default()
        };
        assert!(cfg.validate().unwrap_err().to_string().contains("kernel.gamma"));
    }
}

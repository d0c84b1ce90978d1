use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A split threshold as stored by the party owning the feature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRecord {
    pub record: u64,
    pub feature: u32,
    pub threshold: f64,
}

pub const RECORDS_FILE: &str = "forest_records.bin";
const RECORD_LEN: usize = 20;

/// Records as `(record u64, feature u32, threshold f64)`, little-endian, back to back.
pub fn write_records(path: &Path, records: &[SplitRecord]) -> Result<()> {
    let mut bytes = Vec::with_capacity(records.len() * RECORD_LEN);
    for r in records {
        bytes.extend(r.record.to_le_bytes());
        bytes.extend(r.feature.to_le_bytes());
        bytes.extend(r.threshold.to_le_bytes());
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn read_records(path: &Path) -> Result<Vec<SplitRecord>> {
    let bytes =
        std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    if bytes.len() % RECORD_LEN != 0 {
        return Err(Error::Config(format!(
            "{}: {} bytes is not a whole number of split records",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(RECORD_LEN)
        .map(|c| SplitRecord {
            record: u64::from_le_bytes(c[0..8].try_into().expect("8 bytes")),
            feature: u32::from_le_bytes(c[8..12].try_into().expect("4 bytes")),
            threshold: f64::from_le_bytes(c[12..20].try_into().expect("8 bytes")),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TreeNode {
    Leaf {
        value: f64,
        samples: usize,
    },
    /// The threshold itself lives only at `party`, under `record`.
    Split {
        record: u64,
        party: usize,
        feature: usize,
        quantile: usize,
        left: usize,
        right: usize,
        samples: usize,
    },
}

/// Nodes indexed by node id; the root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, id: usize) -> usize {
            match t.nodes[id] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(t, left).max(walk(t, right)),
            }
        }
        if self.nodes.is_empty() {
            0
        } else {
            walk(self, 0)
        }
    }

    pub fn leaves(&self) -> impl Iterator<Item = (usize, f64, usize)> + '_ {
        self.nodes.iter().enumerate().filter_map(|(id, n)| match n {
            TreeNode::Leaf { value, samples } => Some((id, *value, *samples)),
            TreeNode::Split { .. } => None,
        })
    }
}

/// Coordinator-side forest manifest: topology, leaf values and split owners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestModel {
    pub algorithm: String,
    pub parties: Vec<String>,
    pub trees: Vec<Tree>,
}

impl ForestModel {
    pub fn nodes(&self) -> usize {
        self.trees.iter().map(|t| t.nodes.len()).sum()
    }
}

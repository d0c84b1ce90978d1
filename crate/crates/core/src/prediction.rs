use serde::Serialize;

/// Output of federated inference, aligned to the requested ids.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Predictions {
    pub ids: Vec<u64>,
    pub scores: Vec<f64>,
    pub labels: Vec<f64>,
}

impl Predictions {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Fraction of `labels` (aligned to `ids`) that match. `None` for an empty set.
    pub fn accuracy(&self, truth: &[f64]) -> Option<f64> {
        if self.labels.is_empty() || truth.len() != self.labels.len() {
            return None;
        }
        let hits = self.labels.iter().zip(truth).filter(|(a, b)| a == b).count();
        Some(hits as f64 / truth.len() as f64)
    }
}

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{DataError, PartyTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelKind {
    /// `{-1, +1}`
    PlusMinusOne,
    /// `{0, 1}`
    ZeroOne,
}

/// Two unit-variance Gaussian clusters centred at `±(separation / 2) / sqrt(d)` in every
/// coordinate, so the centres are `separation` apart. Even ids belong to the positive
/// cluster.
pub fn gen_blobs(
    n: usize,
    d: usize,
    separation: f64,
    seed: u64,
    labels: LabelKind,
) -> Result<PartyTable, DataError> {
    if n == 0 || !n.is_multiple_of(2) {
        return Err(DataError::InvalidSize(format!("n = {n} must be positive and even")));
    }
    if d == 0 {
        return Err(DataError::InvalidSize("d must be at least 1".into()));
    }
    if !separation.is_finite() {
        return Err(DataError::InvalidSize(format!("separation {separation}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offset = separation / 2.0 / (d as f64).sqrt();
    let negative = match labels {
        LabelKind::PlusMinusOne => -1.0,
        LabelKind::ZeroOne => 0.0,
    };
    let mut features = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let positive = i % 2 == 0;
        let centre = if positive { offset } else { -offset };
        for _ in 0..d {
            let noise: f64 = StandardNormal.sample(&mut rng);
            features.push(centre + noise);
        }
        y.push(if positive { 1.0 } else { negative });
    }
    let names = (0..d).map(|k| format!("f{k}")).collect();
    PartyTable::new("blobs", (0..n as u64).collect(), names, features, Some(y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::write_csv;

    fn dist(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
    }

    #[test]
    fn widely_separated_blobs_are_separable() {
        let t = gen_blobs(4, 3, 100.0, 1, LabelKind::PlusMinusOne).unwrap();
        let labels = t.labels().unwrap();
        let mut min_inter = f64::INFINITY;
        let mut max_intra: f64 = 0.0;
        for i in 0..4 {
            for j in i + 1..4 {
                let dd = dist(t.row(i), t.row(j));
                if labels[i] == labels[j] {
                    max_intra = max_intra.max(dd);
                } else {
                    min_inter = min_inter.min(dd);
                }
            }
        }
        assert!(min_inter > max_intra);
    }

    #[test]
    fn label_kinds() {
        let pm = gen_blobs(6, 2, 1.0, 2, LabelKind::PlusMinusOne).unwrap();
        assert!(pm.labels().unwrap().iter().all(|&y| y == 1.0 || y == -1.0));
        let zo = gen_blobs(6, 2, 1.0, 2, LabelKind::ZeroOne).unwrap();
        assert!(zo.labels().unwrap().iter().all(|&y| y == 1.0 || y == 0.0));
        assert_eq!(pm.features(), zo.features());
    }

    #[test]
    fn same_seed_same_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        write_csv(&gen_blobs(50, 4, 3.0, 9, LabelKind::ZeroOne).unwrap(), &a, true).unwrap();
        write_csv(&gen_blobs(50, 4, 3.0, 9, LabelKind::ZeroOne).unwrap(), &b, true).unwrap();
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    }

    #[test]
    fn invalid_sizes() {
        assert!(gen_blobs(3, 2, 1.0, 0, LabelKind::ZeroOne).is_err());
        assert!(gen_blobs(4, 0, 1.0, 0, LabelKind::ZeroOne).is_err());
    }
}

use super::stats::FeatureStats;
use crate::error::{Error, Result};

/// Decrypted statistics of one party at one node.
#[derive(Debug, Clone, PartialEq)]
pub struct PartyStats {
    pub party: usize,
    pub features: Vec<FeatureStats<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SplitDecision {
    Split {
        party: usize,
        feature: usize,
        /// Quantile index of the cut; samples at or below it go left.
        quantile: usize,
        score: f64,
        n_left: u64,
        n_right: u64,
    },
    Leaf {
        value: f64,
    },
}

/// `Z_L^2/N_L + Z_R^2/N_R - Z^2/N`
pub fn split_score(z_left: f64, n_left: u64, z_right: f64, n_right: u64) -> f64 {
    let z = z_left + z_right;
    let n = (n_left + n_right) as f64;
    z_left * z_left / n_left as f64 + z_right * z_right / n_right as f64 - z * z / n
}

/// Best prefix split over all bins of all features. Candidates are visited in ascending
/// (party, feature, quantile) order and only a strictly better score replaces the current
/// best, so ties go to the earliest. Returns a leaf with the mean label when no candidate
/// leaves `min_leaf` samples on both sides with a score above `epsilon`.
pub fn find_best_split(stats: &[PartyStats], min_leaf: usize, epsilon: f64) -> Result<SplitDecision> {
    let mut ordered: Vec<&PartyStats> = stats.iter().collect();
    ordered.sort_by_key(|s| s.party);
    let mut totals: Option<(u64, f64)> = None;
    let mut best: Option<(f64, SplitDecision)> = None;
    for ps in ordered {
        let mut features: Vec<&FeatureStats<f64>> = ps.features.iter().collect();
        features.sort_by_key(|f| f.feature);
        for f in features {
            let n: u64 = f.counts.iter().sum();
            let z: f64 = f.sums.iter().sum();
            match totals {
                None => totals = Some((n, z)),
                Some((n0, _)) if n0 != n => {
                    return Err(Error::Protocol(format!(
                        "party {} feature {} counts {n} samples, expected {n0}",
                        ps.party, f.feature
                    )))
                }
                Some(_) => {}
            }
            let (mut n_left, mut z_left) = (0u64, 0.0);
            for i in 0..f.bins.len().saturating_sub(1) {
                n_left += f.counts[i];
                z_left += f.sums[i];
                let n_right = n - n_left;
                if (n_left as usize) < min_leaf || (n_right as usize) < min_leaf {
                    continue;
                }
                let score = split_score(z_left, n_left, z - z_left, n_right);
                if best.as_ref().is_none_or(|(b, _)| score > *b) {
                    best = Some((
                        score,
                        SplitDecision::Split {
                            party: ps.party,
                            feature: f.feature,
                            quantile: f.bins[i],
                            score,
                            n_left,
                            n_right,
                        },
                    ));
                }
            }
        }
    }
    let (n, z) = totals.ok_or_else(|| Error::Protocol("no split statistics at this node".into()))?;
    if n == 0 {
        return Err(Error::Protocol("split statistics cover no samples".into()));
    }
    match best {
        Some((score, decision)) if score > epsilon => Ok(decision),
        _ => Ok(SplitDecision::Leaf { value: z / n as f64 }),
    }
}

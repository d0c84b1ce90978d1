/// Cut points of `values` for `l` quantiles: the value at 1-based rank `ceil(v N / l)` of
/// the sorted column for `v = 1..=l`, with duplicates merged. The last cut is the maximum,
/// so every value falls into some bin `(c[v-1], c[v]]` with `c[-1] = -inf`.
pub fn cut_points(values: &[f64], l: usize) -> Vec<f64> {
    if values.is_empty() || l == 0 {
        return Vec::new();
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut cuts: Vec<f64> = Vec::with_capacity(l.min(n));
    for v in 1..=l {
        let rank = (v * n).div_ceil(l);
        let c = sorted[rank - 1];
        if cuts.last() != Some(&c) {
            cuts.push(c);
        }
    }
    cuts
}

/// Index of the bin holding `x`: the first cut with `x <= cut`. Values above the last cut
/// land in the last bin.
pub fn bin_of(cuts: &[f64], x: f64) -> usize {
    cuts.partition_point(|&c| c < x).min(cuts.len().saturating_sub(1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_rule() {
        assert_eq!(cut_points(&[1.0, 2.0, 3.0, 4.0], 2), vec![2.0, 4.0]);
        assert_eq!(cut_points(&[4.0, 3.0, 2.0, 1.0], 2), vec![2.0, 4.0]);
        assert_eq!(cut_points(&[5.0; 4], 7), vec![5.0]);
        assert_eq!(cut_points(&[3.0, 1.0, 2.0], 3), vec![1.0, 2.0, 3.0]);
        assert_eq!(cut_points(&[3.0, 1.0, 2.0], 10), vec![1.0, 2.0, 3.0]);
        assert!(cut_points(&[], 3).is_empty());
    }

    #[test]
    fn bins_are_left_closed_on_the_cut() {
        let cuts = [2.0, 4.0];
        assert_eq!(bin_of(&cuts, 1.0), 0);
        assert_eq!(bin_of(&cuts, 2.0), 0);
        assert_eq!(bin_of(&cuts, 2.5), 1);
        assert_eq!(bin_of(&cuts, 4.0), 1);
    }
}

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::quantile::{bin_of, cut_points};
use crate::data::PartyTable;
use crate::error::{Error, Result};
use crate::he::{get_ciphertexts, put_ciphertexts, Ciphertext, KeyPair, PublicKey};
use crate::wire::Body;

/// Statistics of one candidate feature at one node: non-empty bins in ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStats<S> {
    /// Column index local to the owning party.
    pub feature: usize,
    /// Quantile index of each bin.
    pub bins: Vec<usize>,
    pub counts: Vec<u64>,
    /// Label sum per bin (plaintext or encrypted).
    pub sums: Vec<S>,
}

/// `ceil(sqrt(d))` of the `d` local columns, ascending, chosen by `seed`.
pub fn sample_features(d: usize, seed: u64) -> Vec<usize> {
    let k = (d as f64).sqrt().ceil() as usize;
    if k >= d {
        return (0..d).collect();
    }
    let mut picked = sample(&mut ChaCha8Rng::seed_from_u64(seed), d, k).into_vec();
    picked.sort_unstable();
    picked
}

/// Groups `rows` into the quantile bins of `feature`, returning `(quantile, rows)` pairs
/// for non-empty bins.
fn group(table: &PartyTable, rows: &[usize], feature: usize, l: usize) -> Vec<(usize, Vec<usize>)> {
    let values: Vec<f64> = rows.iter().map(|&r| table.value(r, feature)).collect();
    let cuts = cut_points(&values, l);
    let mut bins: Vec<Vec<usize>> = vec![Vec::new(); cuts.len()];
    for (&r, &x) in rows.iter().zip(&values) {
        bins[bin_of(&cuts, x)].push(r);
    }
    bins.into_iter()
        .enumerate()
        .filter(|(_, members)| !members.is_empty())
        .collect()
}

fn collect<S>(
    table: &PartyTable,
    rows: &[usize],
    features: &[usize],
    l: usize,
    mut sum: impl FnMut(&[usize]) -> Result<S>,
) -> Result<Vec<FeatureStats<S>>> {
    features
        .iter()
        .map(|&feature| {
            let groups = group(table, rows, feature, l);
            let mut stats = FeatureStats {
                feature,
                bins: Vec::with_capacity(groups.len()),
                counts: Vec::with_capacity(groups.len()),
                sums: Vec::with_capacity(groups.len()),
            };
            for (q, members) in groups {
                stats.bins.push(q);
                stats.counts.push(members.len() as u64);
                stats.sums.push(sum(&members)?);
            }
            Ok(stats)
        })
        .collect()
}

/// Plaintext statistics; `labels` is indexed by table row.
pub fn plain_stats(
    table: &PartyTable,
    rows: &[usize],
    labels: &[f64],
    features: &[usize],
    l: usize,
) -> Result<Vec<FeatureStats<f64>>> {
    collect(table, rows, features, l, |members| {
        Ok(members.iter().map(|&r| labels[r]).sum())
    })
}

/// Statistics with homomorphically summed label ciphertexts, indexed by table row.
pub fn encrypted_stats(
    table: &PartyTable,
    rows: &[usize],
    labels: &[Ciphertext],
    key: &PublicKey,
    features: &[usize],
    l: usize,
) -> Result<Vec<FeatureStats<Ciphertext>>> {
    collect(table, rows, features, l, |members| {
        Ok(key
            .sum(members.iter().map(|&r| &labels[r]))?
            .expect("bins are non-empty"))
    })
}

pub fn decrypt_stats(
    key: &KeyPair,
    stats: &[FeatureStats<Ciphertext>],
) -> Result<Vec<FeatureStats<f64>>> {
    stats
        .iter()
        .map(|s| {
            Ok(FeatureStats {
                feature: s.feature,
                bins: s.bins.clone(),
                counts: s.counts.clone(),
                sums: s
                    .sums
                    .iter()
                    .map(|c| key.decrypt_real(c))
                    .collect::<Result<_, _>>()?,
            })
        })
        .collect()
}

fn key(prefix: &str, i: usize, field: &str) -> String {
    format!("{prefix}f{i}.{field}")
}

/// Writes encrypted statistics as `features`, `f{i}.feature`, `f{i}.bins`, `f{i}.counts`,
/// `f{i}.sums` and the shared exponent `sums.exp`, every key preceded by `prefix`.
pub fn write_stats(body: &mut Body, prefix: &str, stats: &[FeatureStats<Ciphertext>]) -> Result<()> {
    body.insert(format!("{prefix}features"), stats.len() as i64);
    let exponent = stats
        .iter()
        .flat_map(|s| s.sums.first())
        .map(|c| c.exponent)
        .next()
        .unwrap_or(0);
    for (i, s) in stats.iter().enumerate() {
        body.insert(key(prefix, i, "feature"), s.feature as i64);
        body.insert(key(prefix, i, "bins"), s.bins.iter().map(|&b| b as f64).collect::<Vec<_>>());
        body.insert(key(prefix, i, "counts"), s.counts.iter().map(|&c| c as f64).collect::<Vec<_>>());
        put_ciphertexts(body, &key(prefix, i, "sums"), &format!("{prefix}sums.exp"), &s.sums)?;
    }
    body.insert(format!("{prefix}sums.exp"), exponent as i64);
    Ok(())
}

fn whole_numbers(body: &Body, key: &str) -> Result<Vec<u64>> {
    Ok(body.ids(key)?)
}

pub fn read_stats(body: &Body, prefix: &str) -> Result<Vec<FeatureStats<Ciphertext>>> {
    let k = body.index(&format!("{prefix}features"))?;
    (0..k)
        .map(|i| {
            let bins: Vec<usize> = whole_numbers(body, &key(prefix, i, "bins"))?
                .into_iter()
                .map(|b| b as usize)
                .collect();
            let counts = whole_numbers(body, &key(prefix, i, "counts"))?;
            let sums = get_ciphertexts(body, &key(prefix, i, "sums"), &format!("{prefix}sums.exp"))?;
            if bins.len() != counts.len() || sums.len() != counts.len() {
                return Err(Error::Protocol(format!(
                    "{prefix}f{i}: {} bins, {} counts, {} sums",
                    bins.len(),
                    counts.len(),
                    sums.len()
                )));
            }
            Ok(FeatureStats {
                feature: body.index(&key(prefix, i, "feature"))?,
                bins,
                counts,
                sums,
            })
        })
        .collect()
}

/// Copies every entry of `from` into `into` under `prefix`.
pub fn forward(into: &mut Body, prefix: &str, from: &Body) {
    for (k, v) in from.iter() {
        into.insert(format!("{prefix}{k}"), v.clone());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(values: &[f64]) -> PartyTable {
        PartyTable::new(
            "t",
            (0..values.len() as u64).collect(),
            vec!["x".into()],
            values.to_vec(),
            None,
        )
        .unwrap()
    }

    fn key() -> KeyPair {
        KeyPair::generate(64, Some(3), true).unwrap()
    }

    #[test]
    fn grouping_matches_hand_count() {
        let t = table(&[1.0, 2.0, 3.0, 4.0]);
        let y = [0.0, 1.0, 0.0, 1.0];
        let s = plain_stats(&t, &[0, 1, 2, 3], &y, &[0], 2).unwrap();
        assert_eq!(s[0].bins, vec![0, 1]);
        assert_eq!(s[0].counts, vec![2, 2]);
        assert_eq!(s[0].sums, vec![1.0, 1.0]);
    }

    #[test]
    fn constant_feature_is_one_bin() {
        let t = table(&[5.0; 6]);
        let y = [1.0, 0.0, 1.0, 1.0, 0.0, 1.0];
        let s = plain_stats(&t, &[0, 1, 2, 3, 4, 5], &y, &[0], 8).unwrap();
        assert_eq!(s[0].counts, vec![6]);
        assert_eq!(s[0].sums, vec![4.0]);
    }

    #[test]
    fn encrypted_path_equals_plain_path() {
        let kp = key();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let vals: Vec<f64> = (0..40).map(|i| ((i * 37) % 11) as f64 * 0.5).collect();
        let t = table(&vals);
        let y: Vec<f64> = (0..40).map(|i| f64::from(i % 3 == 0)).collect();
        let bits = crate::he::max_scale_bits(kp.public().n(), 1.0);
        let enc: Vec<Ciphertext> = y
            .iter()
            .map(|&v| kp.public().encrypt_real(v, bits, &mut rng).unwrap())
            .collect();
        let rows: Vec<usize> = (0..40).step_by(2).collect();
        let plain = plain_stats(&t, &rows, &y, &[0], 4).unwrap();
        let secret = encrypted_stats(&t, &rows, &enc, kp.public(), &[0], 4).unwrap();
        let mut body = Body::new();
        write_stats(&mut body, "p2.", &secret).unwrap();
        let back = read_stats(&body, "p2.").unwrap();
        assert_eq!(back, secret);
        assert_eq!(decrypt_stats(&kp, &back).unwrap(), plain);
    }

    #[test]
    fn feature_sampling() {
        assert_eq!(sample_features(2, 5), vec![0, 1]);
        assert_eq!(sample_features(0, 5), Vec::<usize>::new());
        let s = sample_features(10, 5);
        assert_eq!(s.len(), 4);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(s, sample_features(10, 5));
    }
}

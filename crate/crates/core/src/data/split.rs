use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{write_csv, write_labels, DataError, PartyTable};

/// Randomly partitions the feature columns into `parties` non-empty groups of near-equal
/// size. Every party keeps the full id list; labels go to the first party only. Columns
/// keep their original relative order within a group.
pub fn vertical_split(
    table: &PartyTable,
    parties: usize,
    seed: u64,
) -> Result<Vec<PartyTable>, DataError> {
    let d = table.n_features();
    if parties == 0 || d < parties {
        return Err(DataError::TooFewFeatures {
            features: d,
            parties,
        });
    }
    let mut order: Vec<usize> = (0..d).collect();
    if parties > 1 {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let mut out = Vec::with_capacity(parties);
    let mut start = 0;
    for p in 0..parties {
        let size = d / parties + usize::from(p < d % parties);
        let mut cols = order[start..start + size].to_vec();
        start += size;
        cols.sort_unstable();
        let names: Vec<String> = cols.iter().map(|&c| table.feature_names()[c].clone()).collect();
        let mut part = table
            .select_columns(&names)
            .expect("column names come from the table");
        part.set_name(format!("party{}", p + 1));
        if p > 0 {
            part.set_labels(None)?;
        }
        out.push(part);
    }
    Ok(out)
}

/// Concatenates the feature columns of aligned tables, taking labels from whichever table
/// has them.
pub fn join_columns(name: &str, tables: &[PartyTable]) -> Result<PartyTable, DataError> {
    if let Alignment::Mismatch { party, position, .. } = check_alignment(tables) {
        return Err(DataError::LabelIds(format!(
            "{party} is not aligned at position {position}"
        )));
    }
    let ids = tables.first().map(|t| t.ids().to_vec()).unwrap_or_default();
    let names: Vec<String> = tables
        .iter()
        .flat_map(|t| t.feature_names().iter().cloned())
        .collect();
    let features = (0..ids.len())
        .flat_map(|i| tables.iter().flat_map(move |t| t.row(i).iter().copied()))
        .collect();
    let labels = tables.iter().find_map(|t| t.labels().map(<[f64]>::to_vec));
    PartyTable::new(name, ids, names, features, labels)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Alignment {
    Aligned,
    /// `party` diverges from the first table at `position`; `None` means the list ended.
    Mismatch {
        party: String,
        position: usize,
        expected: Option<u64>,
        found: Option<u64>,
    },
}

/// Verifies that every table carries the same id sequence as the first one.
pub fn check_alignment(tables: &[PartyTable]) -> Alignment {
    let Some(reference) = tables.first() else {
        return Alignment::Aligned;
    };
    let expected = reference.ids();
    for t in &tables[1..] {
        let found = t.ids();
        let n = expected.len().max(found.len());
        for pos in 0..n {
            let (e, f) = (expected.get(pos).copied(), found.get(pos).copied());
            if e != f {
                return Alignment::Mismatch {
                    party: t.name().to_owned(),
                    position: pos,
                    expected: e,
                    found: f,
                };
            }
        }
    }
    Alignment::Aligned
}

/// Writes `<stem>.party<k>.csv` for each part plus `<stem>.labels.csv`.
pub fn write_split(
    parts: &[PartyTable],
    dir: &Path,
    stem: &str,
) -> Result<Vec<PathBuf>, DataError> {
    std::fs::create_dir_all(dir).map_err(|source| DataError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let mut written = Vec::new();
    for (k, part) in parts.iter().enumerate() {
        let path = dir.join(format!("{stem}.party{}.csv", k + 1));
        write_csv(part, &path, false)?;
        written.push(path);
    }
    if let Some(labelled) = parts.iter().find(|p| p.labels().is_some()) {
        let path = dir.join(format!("{stem}.labels.csv"));
        write_labels(labelled, &path)?;
        written.push(path);
    }
    Ok(written)
}

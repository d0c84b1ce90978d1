use std::path::Path;

use super::{DataError, PartyTable};

fn path_str(path: &Path) -> String {
    path.display().to_string()
}

fn parse_number(path: &Path, row: usize, column: &str, raw: &str) -> Result<f64, DataError> {
    match raw.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(DataError::NonNumeric {
            path: path_str(path),
            row,
            column: column.to_owned(),
            value: raw.to_owned(),
        }),
    }
}

fn parse_id(path: &Path, row: usize, raw: &str) -> Result<u64, DataError> {
    raw.trim().parse::<u64>().map_err(|_| DataError::BadId {
        path: path_str(path),
        row,
        value: raw.to_owned(),
    })
}

fn open(path: &Path) -> Result<csv::Reader<std::fs::File>, DataError> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|source| DataError::Csv {
            path: path_str(path),
            source,
        })
}

/// Reads a party CSV: header row, `id` first, numeric feature columns. With `has_labels`
/// the column named `label` is taken out as the label vector. Rows come back sorted by id.
/// Data rows are numbered from 1 in error messages.
pub fn load_csv(path: &Path, has_labels: bool) -> Result<PartyTable, DataError> {
    let mut reader = open(path)?;
    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r.map_err(|source| DataError::Csv {
            path: path_str(path),
            source,
        })?,
        None => {
            return Err(DataError::MissingHeader {
                path: path_str(path),
            })
        }
    };
    let columns: Vec<String> = header.iter().map(|c| c.trim().to_owned()).collect();
    if columns.first().map(String::as_str) != Some("id") {
        return Err(DataError::MissingIdColumn {
            path: path_str(path),
            found: columns.first().cloned().unwrap_or_default(),
        });
    }
    let label_col = if has_labels {
        Some(
            columns
                .iter()
                .position(|c| c == "label")
                .ok_or_else(|| DataError::MissingLabelColumn {
                    path: path_str(path),
                })?,
        )
    } else {
        None
    };
    let feature_cols: Vec<usize> = (1..columns.len()).filter(|&c| Some(c) != label_col).collect();
    let feature_names = feature_cols.iter().map(|&c| columns[c].clone()).collect();

    let mut rows = Vec::new();
    for (i, record) in records.enumerate() {
        let row = i + 1;
        let record = record.map_err(|source| DataError::Csv {
            path: path_str(path),
            source,
        })?;
        if record.len() != columns.len() {
            return Err(DataError::RaggedRow {
                path: path_str(path),
                row,
                found: record.len(),
                expected: columns.len(),
            });
        }
        let id = parse_id(path, row, &record[0])?;
        let values = feature_cols
            .iter()
            .map(|&c| parse_number(path, row, &columns[c], &record[c]))
            .collect::<Result<Vec<_>, _>>()?;
        let label = label_col
            .map(|c| parse_number(path, row, "label", &record[c]))
            .transpose()?;
        rows.push((id, values, label));
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut table = PartyTable::from_rows(name, rows, feature_names)?;
    if has_labels && table.labels().is_none() {
        table.set_labels(Some(Vec::new()))?;
    }
    Ok(table)
}

/// Reads an `id,label` file, sorted by id.
pub fn load_labels(path: &Path) -> Result<Vec<(u64, f64)>, DataError> {
    let table = load_csv(path, true)?;
    Ok(table
        .ids()
        .iter()
        .copied()
        .zip(table.labels().unwrap_or_default().iter().copied())
        .collect())
}

/// Attaches labels from an `id,label` file; its ids must match the table's exactly.
pub fn attach_labels(table: &mut PartyTable, path: &Path) -> Result<(), DataError> {
    let labels = load_labels(path)?;
    if labels.len() != table.n_rows() {
        return Err(DataError::LabelIds(format!(
            "{} labels for {} rows",
            labels.len(),
            table.n_rows()
        )));
    }
    for (pos, ((id, _), &expected)) in labels.iter().zip(table.ids()).enumerate() {
        if *id != expected {
            return Err(DataError::LabelIds(format!(
                "position {pos}: label id {id}, feature id {expected}"
            )));
        }
    }
    table.set_labels(Some(labels.into_iter().map(|(_, y)| y).collect()))
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path_str(path),
        source,
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> DataError + '_ {
    move |source| DataError::Csv {
        path: path_str(path),
        source,
    }
}

/// Writes `id, features...` and, when `with_labels` and labels exist, a trailing `label`.
/// Floats use the shortest representation that parses back to the same value.
pub fn write_csv(table: &PartyTable, path: &Path, with_labels: bool) -> Result<(), DataError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(path))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    let labels = table.labels().filter(|_| with_labels);
    let mut header = vec!["id".to_owned()];
    header.extend(table.feature_names().iter().cloned());
    if labels.is_some() {
        header.push("label".into());
    }
    w.write_record(&header).map_err(csv_err(path))?;
    for i in 0..table.n_rows() {
        let mut rec = vec![table.ids()[i].to_string()];
        rec.extend(table.row(i).iter().map(|v| v.to_string()));
        if let Some(l) = labels {
            rec.push(l[i].to_string());
        }
        w.write_record(&rec).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Writes an `id,label` file.
pub fn write_labels(table: &PartyTable, path: &Path) -> Result<(), DataError> {
    let labels = table.labels().ok_or_else(|| DataError::LabelCount {
        labels: 0,
        rows: table.n_rows(),
    })?;
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["id", "label"]).map_err(csv_err(path))?;
    for (id, y) in table.ids().iter().zip(labels) {
        w.write_record([id.to_string(), y.to_string()])
            .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

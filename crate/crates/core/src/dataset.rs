//! CSV ingestion: one row per object, one column per feature.
//!
//! The first record is treated as a header when any of its fields fails to
//! parse as a number. With a header, a column named `label` is pulled out as
//! ground truth and a column named `id` as object identifiers; neither is
//! clustered on.

use std::io::Read;
use std::path::Path;

use ndarray::Array2;

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};

pub const LABEL_COLUMN: &str = "label";
pub const ID_COLUMN: &str = "id";

#[derive(Debug, Clone, Copy)]
pub struct CsvOptions {
    pub delimiter: u8,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self { delimiter: b',' }
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    /// Object identifiers; 1-based row numbers when the file has no `id` column.
    pub ids: Vec<String>,
    pub feature_names: Option<Vec<String>>,
    pub labels: Option<Vec<String>>,
    pub matrix: FeatureMatrix,
}

pub fn read_csv_path(path: impl AsRef<Path>, opts: CsvOptions) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    read_csv(file, opts)
}

pub fn read_csv<R: Read>(reader: R, opts: CsvOptions) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .delimiter(opts.delimiter)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut records = rdr.records();
    let first = match records.next() {
        Some(r) => r?,
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "empty input".into(),
            })
        }
    };
    let is_header = first.iter().any(|f| f.parse::<f64>().is_err());
    let width = first.len();

    let (label_col, id_col, feature_names) = if is_header {
        let find = |name: &str| first.iter().position(|f| f.eq_ignore_ascii_case(name));
        let label_col = find(LABEL_COLUMN);
        let id_col = find(ID_COLUMN);
        let names = first
            .iter()
            .enumerate()
            .filter(|(j, _)| Some(*j) != label_col && Some(*j) != id_col)
            .map(|(_, f)| f.to_string())
            .collect();
        (label_col, id_col, Some(names))
    } else {
        (None, None, None)
    };

    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut flat = Vec::new();

    let mut push_row = |record: &csv::StringRecord, line: u64, row_idx: usize| -> Result<()> {
        if record.len() != width {
            return Err(Error::Parse {
                line,
                message: format!("expected {width} fields, found {}", record.len()),
            });
        }
        for (j, field) in record.iter().enumerate() {
            if Some(j) == label_col {
                labels.push(field.to_string());
            } else if Some(j) == id_col {
                ids.push(field.to_string());
            } else {
                let v: f64 = field.parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("field {} is not a number: {field:?}", j + 1),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        line,
                        message: format!("field {} is not finite", j + 1),
                    });
                }
                flat.push(v);
            }
        }
        if id_col.is_none() {
            ids.push((row_idx + 1).to_string());
        }
        Ok(())
    };

    let mut n = 0;
    if !is_header {
        push_row(&first, 1, n)?;
        n += 1;
    }
    for record in records {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        push_row(&record, line, n)?;
        n += 1;
    }

    let p = width - usize::from(label_col.is_some()) - usize::from(id_col.is_some());
    if n == 0 || p == 0 {
        return Err(Error::Parse {
            line: 1,
            message: format!("no data: {n} rows, {p} feature columns"),
        });
    }
    let values = Array2::from_shape_vec((n, p), flat).map_err(|e| Error::InvalidShape(e.to_string()))?;
    Ok(Dataset {
        ids,
        feature_names,
        labels: label_col.map(|_| labels),
        matrix: FeatureMatrix::new(values)?,
    })
}

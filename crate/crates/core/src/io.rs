//! CSV ingestion and JSON artifacts.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Design, Standardization};
use crate::error::{Error, Result};

/// How a dataset was read, kept alongside every fit so reports can apply the
/// same transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataMeta {
    pub path: PathBuf,
    pub response: String,
    pub covariates: Vec<String>,
    pub n: usize,
    pub p: usize,
    pub standardization: Option<Standardization>,
}

fn parse_cell(path: &Path, row: usize, column: usize, s: &str) -> Result<f64> {
    let t = s.trim();
    let err = |message: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        column,
        message,
    };
    if t.is_empty() {
        return Err(err("missing value".into()));
    }
    let v: f64 = t.parse().map_err(|_| err(format!("not a number: {t:?}")))?;
    if !v.is_finite() {
        return Err(err(format!("non-finite value {t:?}")));
    }
    Ok(v)
}

/// Reads a headered CSV. `response` names the response column; the last
/// column is used when it is `None`. Rows and columns in errors are 1-based
/// with the header as row 1.
pub fn read_dataset_csv(path: &Path, response: Option<&str>, standardize: bool) -> Result<(Dataset, DataMeta)> {
    let mut r = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(|s| s.trim().to_string()).collect();
    if header.len() < 2 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: "need at least one covariate and a response column".into(),
        });
    }
    let resp = match response {
        None => header.len() - 1,
        Some(name) => header.iter().position(|h| h == name).ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            message: format!("no column named {name:?}"),
        })?,
    };
    let mut xs = Vec::new();
    let mut y = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        if rec.len() != header.len() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                row,
                column: rec.len().min(header.len()) + 1,
                message: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        for (j, cell) in rec.iter().enumerate() {
            let v = parse_cell(path, row, j + 1, cell)?;
            if j == resp {
                y.push(v);
            } else {
                xs.push(v);
            }
        }
    }
    if y.is_empty() {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: "no data rows".into(),
        });
    }
    let covariates: Vec<String> = header.iter().enumerate().filter(|(j, _)| *j != resp).map(|(_, h)| h.clone()).collect();
    let x = Design::from_row_major(y.len(), covariates.len(), xs)?;
    let mut data = Dataset::new(x, y)?;
    data.names = covariates.clone();
    let standardization = if standardize {
        let s = Standardization::fit(&data.x);
        data = data.standardize(&s)?;
        Some(s)
    } else {
        None
    };
    let meta = DataMeta {
        path: path.to_path_buf(),
        response: header[resp].clone(),
        covariates,
        n: data.n(),
        p: data.p(),
        standardization,
    };
    Ok((data, meta))
}

/// Writes covariates then the response as the last column, `y`.
pub fn write_dataset_csv(path: &Path, data: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = data.names.clone();
    header.push("y".into());
    w.write_record(&header)?;
    for (row, y) in data.x.rows().zip(&data.y) {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        rec.push(y.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

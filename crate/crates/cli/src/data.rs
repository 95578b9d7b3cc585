//! Reading observations and contrasts from disk.

use std::path::Path;

use leanreg_core::Sample;
use nalgebra::{DMatrix, DVector};

use crate::error::{CliError, Result};

/// Reads a CSV with header `y,x1,...,xd`. Row numbers in errors count the
/// header as row 1, matching what an editor shows.
pub fn parse_data_csv(path: &Path) -> Result<Sample> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_data_str(&text, path)
}

pub fn parse_data_str(text: &str, path: &Path) -> Result<Sample> {
    let data_err = |message: String| CliError::Data {
        path: path.to_path_buf(),
        message,
    };
    let row_err = |row: usize, message: String| CliError::DataRow {
        path: path.to_path_buf(),
        row,
        message,
    };

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = reader.records();

    let header = match records.next() {
        Some(r) => r.map_err(|e| data_err(e.to_string()))?,
        None => return Err(data_err("empty file".into())),
    };
    check_header(&header).map_err(|m| row_err(1, m))?;
    let d = header.len() - 1;

    let mut y = Vec::new();
    let mut values = Vec::new();
    for (k, record) in records.enumerate() {
        let row = k + 2;
        let record = record.map_err(|e| row_err(row, e.to_string()))?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != d + 1 {
            return Err(row_err(
                row,
                format!("expected {} fields, found {}", d + 1, record.len()),
            ));
        }
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| row_err(row, format!("column {}: not a number: {cell:?}", &header[j])))?;
            if !v.is_finite() {
                return Err(row_err(row, format!("column {}: non-finite value", &header[j])));
            }
            if j == 0 {
                y.push(v);
            } else {
                values.push(v);
            }
        }
    }
    if y.is_empty() {
        return Err(data_err("no observations".into()));
    }
    let n = y.len();
    let x = DMatrix::from_row_slice(n, d, &values);
    Ok(Sample::new(x, DVector::from_vec(y))?)
}

fn check_header(header: &csv::StringRecord) -> std::result::Result<(), String> {
    if header.len() < 2 {
        return Err("header must be `y,x1,...,xd` with at least one covariate".into());
    }
    if &header[0] != "y" {
        return Err(format!("header must start with `y`, found {:?}", &header[0]));
    }
    for (j, name) in header.iter().enumerate().skip(1) {
        if name != format!("x{j}") {
            return Err(format!("header column {} must be `x{j}`, found {name:?}", j + 1));
        }
    }
    Ok(())
}

/// `coord:k` for the k-th covariate (1-based) or `file:<path>` holding `d`
/// numbers separated by commas or whitespace.
pub fn parse_contrast(spec: &str, d: usize) -> Result<DVector<f64>> {
    if let Some(k) = spec.strip_prefix("coord:") {
        let k: usize = k
            .trim()
            .parse()
            .map_err(|_| CliError::Argument(format!("bad coordinate in contrast {spec:?}")))?;
        if k == 0 || k > d {
            return Err(CliError::Argument(format!(
                "contrast coordinate {k} out of range 1..={d}"
            )));
        }
        let mut c = DVector::zeros(d);
        c[k - 1] = 1.0;
        return Ok(c);
    }
    if let Some(p) = spec.strip_prefix("file:") {
        let path = Path::new(p);
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let values = text
            .split(|ch: char| ch == ',' || ch.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>().map_err(|_| CliError::Data {
                    path: path.to_path_buf(),
                    message: format!("not a number: {t:?}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != d {
            return Err(CliError::Data {
                path: path.to_path_buf(),
                message: format!("contrast has {} entries, data has d = {d}", values.len()),
            });
        }
        return Ok(DVector::from_vec(values));
    }
    Err(CliError::Argument(format!(
        "contrast must be `coord:k` or `file:<path>`, got {spec:?}"
    )))
}

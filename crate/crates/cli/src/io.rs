//! CSV and JSON plumbing.
//!
//! Matrix files have a header `{prefix}_0,…,{prefix}_{m−1},label` followed by
//! one numeric row per sample; logits use the prefix `class`, features `f`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use apa_core::Tensor;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{CliError, CliResult};

/// A parsed matrix file.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMatrix {
    pub values: Tensor<f64>,
    pub labels: Vec<usize>,
}

fn data_err(path: &Path, msg: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {msg}", path.display()))
}

/// Reads a labeled matrix whose value columns are named `{prefix}_{j}`.
/// With `labels_index_columns`, every label must name one of the columns.
pub fn read_matrix_csv(path: &Path, prefix: &str, labels_index_columns: bool) -> CliResult<LabeledMatrix> {
    let file = File::open(path).map_err(|e| data_err(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(BufReader::new(file));
    let header = rdr.headers().map_err(|e| data_err(path, e))?.clone();
    let m = header.len().checked_sub(1).filter(|&m| m > 0).ok_or_else(|| {
        data_err(path, format!("header needs at least one {prefix}_j column and a label column"))
    })?;
    for (j, name) in header.iter().take(m).enumerate() {
        if name != format!("{prefix}_{j}") {
            return Err(data_err(path, format!("header column {} is '{name}', expected '{prefix}_{j}'", j + 1)));
        }
    }
    if &header[m] != "label" {
        return Err(data_err(path, format!("last header column is '{}', expected 'label'", &header[m])));
    }
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        // Row numbers count the header as row 1.
        let row = i + 2;
        let rec = rec.map_err(|e| data_err(path, format!("row {row}: {e}")))?;
        for (j, cell) in rec.iter().take(m).enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| data_err(path, format!("row {row}, column {}: '{cell}' is not a number", j + 1)))?;
            if !v.is_finite() {
                return Err(data_err(path, format!("row {row}, column {}: non-finite value", j + 1)));
            }
            data.push(v);
        }
        let cell = &rec[m];
        let y: usize = cell
            .parse()
            .map_err(|_| data_err(path, format!("row {row}, column {}: label '{cell}' is not an integer", m + 1)))?;
        if labels_index_columns && y >= m {
            return Err(data_err(path, format!("row {row}, column {}: label {y} is not below {m}", m + 1)));
        }
        labels.push(y);
    }
    let n = labels.len();
    let values = Tensor::from_vec(n, m, data).map_err(|e| data_err(path, e))?;
    Ok(LabeledMatrix { values, labels })
}

/// Writes a labeled matrix in the same format [`read_matrix_csv`] reads.
pub fn write_matrix_csv(path: &Path, prefix: &str, values: &Tensor<f64>, labels: &[usize]) -> CliResult<()> {
    let file = File::create(path).map_err(|e| data_err(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let mut header: Vec<String> = (0..values.cols()).map(|j| format!("{prefix}_{j}")).collect();
    header.push("label".into());
    w.write_record(&header).map_err(|e| data_err(path, e))?;
    for (i, y) in labels.iter().enumerate() {
        let mut rec: Vec<String> = values.row(i).iter().map(|v| v.to_string()).collect();
        rec.push(y.to_string());
        w.write_record(&rec).map_err(|e| data_err(path, e))?;
    }
    w.flush().map_err(|e| data_err(path, e))
}

pub fn write_csv_rows(path: &Path, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let file = File::create(path).map_err(|e| data_err(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(header).map_err(|e| data_err(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| data_err(path, e))?;
    }
    w.flush().map_err(|e| data_err(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let file = File::open(path).map_err(|e| data_err(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| data_err(path, e))
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut file = File::create(path).map_err(|e| data_err(path, e))?;
    file.write_all(to_json(value).as_bytes()).map_err(|e| data_err(path, e))
}

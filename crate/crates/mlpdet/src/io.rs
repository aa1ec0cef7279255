//! File formats: dataset CSV, whitespace matrix files, and JSON reports.
//!
//! Data CSV carries the header `z1,..,zL,y1,..,yd` and plain decimal values
//! written at 17 significant digits, so a write/read round trip reproduces
//! every f64 bit for bit.

use std::path::Path;

use serde::Serialize;

use crate::cost::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{Matrix, SpdMatrix};

fn parse_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.display().to_string(), msg: msg.into() }
}

/// Expected header names for given dimensions.
fn header_names(input_dim: usize, output_dim: usize) -> Vec<String> {
    (1..=input_dim)
        .map(|k| format!("z{k}"))
        .chain((1..=output_dim).map(|k| format!("y{k}")))
        .collect()
}

pub fn write_dataset_csv(path: &Path, data: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header_names(data.input_dim(), data.output_dim()))?;
    for t in 0..data.n() {
        let record: Vec<String> = data
            .input(t)
            .iter()
            .chain(data.target(t))
            .map(|v| format!("{v:.16e}"))
            .collect();
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset_csv(path: &Path, input_dim: usize, output_dim: usize) -> Result<Dataset> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let expected = header_names(input_dim, output_dim);
    for name in &expected {
        if !headers.iter().any(|h| h == name) {
            return Err(parse_err(path, format!("missing column `{name}`")));
        }
    }
    if headers.len() != expected.len() {
        return Err(parse_err(
            path,
            format!("expected {} columns, found {}", expected.len(), headers.len()),
        ));
    }
    for (got, want) in headers.iter().zip(&expected) {
        if got != want {
            return Err(parse_err(path, format!("column `{got}` out of order, expected `{want}`")));
        }
    }

    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != expected.len() {
            return Err(parse_err(path, format!("row {}: wrong field count", row + 2)));
        }
        let values: Vec<f64> = record
            .iter()
            .map(|f| {
                f.trim()
                    .parse()
                    .map_err(|_| parse_err(path, format!("row {}: bad number `{f}`", row + 2)))
            })
            .collect::<Result<_>>()?;
        inputs.push(values[..input_dim].to_vec());
        targets.push(values[input_dim..].to_vec());
    }
    Dataset::from_rows(&inputs, &targets)
}

/// Reads a square matrix from whitespace-separated rows (one row per line).
pub fn read_matrix_file(path: &Path) -> Result<SpdMatrix> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|f| f.parse().map_err(|_| parse_err(path, format!("bad value `{f}`"))))
            .collect::<Result<_>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_err(path, "empty matrix file"));
    }
    let dim = rows.len();
    if rows.iter().any(|r| r.len() != dim) {
        return Err(parse_err(path, "matrix must be square"));
    }
    SpdMatrix::from_rows(&rows)
}

/// Pretty JSON plus a trailing newline; key order follows the struct, so
/// reruns under the same seed produce byte-identical files.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| Error::Invalid(format!("serialization failed: {e}")))?;
    bytes.push(b'\n');
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Writes residuals or other raw matrices as headerless CSV (17 significant
/// digits), for external tooling.
pub fn write_matrix_csv(path: &Path, m: &Matrix) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for i in 0..m.rows() {
        let record: Vec<String> = m.row(i).iter().map(|v| format!("{v:.16e}")).collect();
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{random_init, MlpSpec};
    use crate::rng::RngStream;
    use crate::sim;

    #[test]
    fn dataset_csv_roundtrip_is_bit_faithful() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        let spec = MlpSpec::new(2, 3, 2).unwrap();
        let stream = RngStream::new(123);
        let w0 = random_init(&spec, 2.0, &mut stream.substream(0).rng());
        let gamma = SpdMatrix::from_rows(&[vec![5.0, 4.0], vec![4.0, 5.0]]).unwrap();
        let data =
            sim::gen_nar_series(&spec, &w0, 50, &gamma, &mut stream.substream(1).rng()).unwrap();
        write_dataset_csv(&path, &data).unwrap();
        let back = read_dataset_csv(&path, 2, 2).unwrap();
        assert_eq!(back.n(), data.n());
        for t in 0..data.n() {
            for (a, b) in data.input(t).iter().zip(back.input(t)) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
            for (a, b) in data.target(t).iter().zip(back.target(t)) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn missing_column_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "z1,z2,y1\n1,2,3\n").unwrap();
        match read_dataset_csv(&path, 2, 2) {
            Err(Error::Parse { msg, .. }) => assert!(msg.contains("y2"), "message: {msg}"),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn matrix_file_reads_identity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("identity.txt");
        std::fs::write(&path, "1 0\n0 1\n").unwrap();
        let m = read_matrix_file(&path).unwrap();
        assert_eq!(m, SpdMatrix::identity(2));

        std::fs::write(&path, "1 0\n0\n").unwrap();
        assert!(read_matrix_file(&path).is_err());
    }
}

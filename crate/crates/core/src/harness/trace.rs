//! Column-oriented trace log with a stable CSV schema and content hash.

use std::io::{BufRead, Write};

use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace is empty")]
    Empty,
    #[error("missing column {0}")]
    MissingColumn(String),
    #[error("row {row}: expected {expected} fields, found {found}")]
    Width { row: usize, expected: usize, found: usize },
    #[error("row {row}, column {column}: {value:?} is not a number")]
    Number { row: usize, column: usize, value: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn axes(prefix: &str, names: &[&str]) -> Vec<String> {
    names.iter().map(|n| format!("{prefix}_{n}")).collect()
}

fn indexed(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

const XYZ: [&str; 3] = ["x", "y", "z"];
const TWIST: [&str; 6] = ["x", "y", "z", "rx", "ry", "rz"];

/// Column names, in order.
pub fn columns() -> Vec<String> {
    let mut c = vec!["time".to_string()];
    c.extend(indexed("q_m", 7));
    c.extend(indexed("qd_m", 7));
    c.extend(indexed("q_s", 6));
    c.extend(indexed("qd_s", 6));
    c.extend(axes("xm", &XYZ));
    c.extend(axes("xs", &XYZ));
    c.extend(axes("om", &XYZ));
    c.extend(axes("os", &XYZ));
    c.extend(axes("vm", &TWIST));
    c.extend(axes("vs", &TWIST));
    c.extend(axes("fm", &TWIST));
    c.extend(axes("fs", &TWIST));
    c.extend(axes("fh", &TWIST));
    for name in ["fe", "fh_n", "f_cmd", "fs_n"] {
        c.push(name.into());
    }
    c.extend(axes("rho_m", &TWIST));
    c.extend(axes("rho_s", &TWIST));
    c.extend(axes("rho_v", &TWIST));
    c.extend(axes("rho_p", &TWIST));
    for name in [
        "p_t7",
        "p_t",
        "int_p_t7",
        "int_p_t",
        "margin_m",
        "margin_s",
        "delay_ms",
        "delay_sm",
        "clutch",
        "penetration",
    ] {
        c.push(name.into());
    }
    c
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceLog {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Default for TraceLog {
    fn default() -> Self {
        Self::new()
    }
}

impl TraceLog {
    pub fn new() -> Self {
        Self { columns: columns(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn index(&self, name: &str) -> Result<usize, TraceError> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| TraceError::MissingColumn(name.into()))
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>, TraceError> {
        let i = self.index(name)?;
        Ok(self.rows.iter().map(|r| r[i]).collect())
    }

    /// Columns `prefix_x`, `prefix_y`, `prefix_z` as row vectors.
    pub fn vec3(&self, prefix: &str) -> Result<Vec<[f64; 3]>, TraceError> {
        let idx = XYZ
            .iter()
            .map(|a| self.index(&format!("{prefix}_{a}")))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(self.rows.iter().map(|r| [r[idx[0]], r[idx[1]], r[idx[2]]]).collect())
    }

    /// Every `factor`-th row, starting with the first.
    pub fn decimated(&self, factor: usize) -> Self {
        Self {
            columns: self.columns.clone(),
            rows: self.rows.iter().step_by(factor.max(1)).cloned().collect(),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), TraceError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| format!("{v:.9e}")))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ASCII output")
    }

    /// SHA-256 of the formatted CSV, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_csv_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self, TraceError> {
        let mut r = csv::Reader::from_reader(input);
        let columns: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for (k, rec) in r.records().enumerate() {
            let rec = rec?;
            if rec.len() != columns.len() {
                return Err(TraceError::Width { row: k + 1, expected: columns.len(), found: rec.len() });
            }
            let row = rec
                .iter()
                .enumerate()
                .map(|(j, v)| {
                    v.trim().parse::<f64>().map_err(|_| TraceError::Number {
                        row: k + 1,
                        column: j + 1,
                        value: v.to_string(),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        Ok(Self { columns, rows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_is_unique_and_stable() {
        let c = columns();
        let mut sorted = c.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), c.len());
        assert_eq!(c[0], "time");
        assert_eq!(c.len(), 107);
    }

    #[test]
    fn csv_roundtrip_preserves_formatted_values() {
        let mut t = TraceLog::new();
        let n = t.columns.len();
        t.push((0..n).map(|i| i as f64 * 0.1).collect());
        t.push((0..n).map(|i| -(i as f64) / 3.0).collect());
        let text = t.to_csv_string();
        let back = TraceLog::read_csv(text.as_bytes()).unwrap();
        assert_eq!(back.to_csv_string(), text);
        assert_eq!(back.hash(), t.hash());
        assert_eq!(t.hash().len(), 64);
    }

    #[test]
    fn read_rejects_bad_rows() {
        assert!(matches!(
            TraceLog::read_csv("a,b\n1,x\n".as_bytes()),
            Err(TraceError::Number { row: 1, column: 2, .. })
        ));
        assert!(TraceLog::read_csv("a,b\n1\n".as_bytes()).is_err());
    }
}

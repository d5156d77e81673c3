use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Result, UneError};

/// Binary attribute labels, one row per sample, aligned to latent rows.
///
/// Labels are stored as `{0, 1}`. CSV ingestion maps `-1` to `0` so that
/// `±1`-coded sources load directly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeTable {
    names: Vec<String>,
    /// Row-major `n x A`.
    labels: Vec<u8>,
    n: usize,
}

impl AttributeTable {
    pub fn new(names: Vec<String>, rows: Vec<Vec<u8>>) -> Result<Self> {
        let mut seen = HashSet::new();
        for name in &names {
            if name.trim().is_empty() {
                return Err(UneError::Data("attribute names must be non-empty".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(UneError::Data(format!("duplicate attribute name {name:?}")));
            }
        }
        let a = names.len();
        let n = rows.len();
        let mut labels = Vec::with_capacity(n * a);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != a {
                return Err(UneError::Shape(format!(
                    "attribute row {i} has {} entries, expected {a}",
                    row.len()
                )));
            }
            if let Some(v) = row.iter().find(|&&v| v > 1) {
                return Err(UneError::Data(format!("label {v} in row {i} is not 0 or 1")));
            }
            labels.extend(row);
        }
        Ok(Self { names, labels, n })
    }

    pub fn nrows(&self) -> usize {
        self.n
    }

    pub fn n_attributes(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, row: usize, attr: usize) -> u8 {
        self.labels[row * self.names.len() + attr]
    }

    pub fn column(&self, attr: usize) -> Vec<u8> {
        (0..self.n).map(|i| self.get(i, attr)).collect()
    }

    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let a = self.names.len();
        let mut labels = Vec::with_capacity(indices.len() * a);
        for &i in indices {
            if i >= self.n {
                return Err(UneError::Index {
                    index: i,
                    len: self.n,
                });
            }
            labels.extend_from_slice(&self.labels[i * a..(i + 1) * a]);
        }
        Ok(Self {
            names: self.names.clone(),
            labels,
            n: indices.len(),
        })
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| UneError::Format("attribute CSV is empty".into()))?;
        let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
        let mut rows = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let row = line
                .split(',')
                .map(|cell| match cell.trim() {
                    "1" => Ok(1u8),
                    "0" | "-1" => Ok(0u8),
                    other => Err(UneError::Data(format!(
                        "invalid label {other:?} on data row {lineno}"
                    ))),
                })
                .collect::<Result<Vec<u8>>>()?;
            rows.push(row);
        }
        Self::new(names, rows)
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.names.join(",");
        out.push('\n');
        let a = self.names.len();
        for i in 0..self.n {
            let row = &self.labels[i * a..(i + 1) * a];
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| UneError::io(path, e))?;
        Self::parse_csv(&text)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| UneError::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_maps_minus_one() {
        let t = AttributeTable::parse_csv("Smiling,Male\n1,-1\n0,1\n").unwrap();
        assert_eq!(t.names(), &["Smiling".to_string(), "Male".to_string()]);
        assert_eq!(t.column(0), vec![1, 0]);
        assert_eq!(t.column(1), vec![0, 1]);
        assert_eq!(t.to_csv(), "Smiling,Male\n1,0\n0,1\n");
    }

    #[test]
    fn rejects_duplicates_blank_names_and_bad_labels() {
        assert!(AttributeTable::parse_csv("a,a\n1,0\n").is_err());
        assert!(AttributeTable::parse_csv("a,\n1,0\n").is_err());
        assert!(AttributeTable::parse_csv("a,b\n1,2\n").is_err());
        assert!(AttributeTable::parse_csv("a,b\n1\n").is_err());
    }

    #[test]
    fn select_rows_keeps_alignment() {
        let t = AttributeTable::new(vec!["x".into()], vec![vec![0], vec![1], vec![1]]).unwrap();
        let s = t.select_rows(&[2, 0]).unwrap();
        assert_eq!(s.column(0), vec![1, 0]);
        assert!(t.select_rows(&[3]).is_err());
    }
}

//! CSV ingestion/output and feature preprocessing.
//!
//! Labeled files have a header row and a final `label` column holding
//! 1-based class labels. Values are written with 17 significant digits so
//! that every double survives a round trip.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};

pub const LABEL_COLUMN: &str = "label";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, message: message.into() }
}

/// Formats a double with 17 significant digits.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

/// Parsed delimited table: header plus numeric rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    /// Row-major.
    pub values: Vec<f64>,
    pub rows: usize,
}

fn read_table(path: &Path) -> Result<Table> {
    let mut text = String::new();
    File::open(path).and_then(|mut f| f.read_to_string(&mut text)).map_err(io_err(path))?;
    parse_table(path, &text)
}

fn parse_table(path: &Path, text: &str) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let width = header.len();
    let mut values = Vec::new();
    let mut rows = 0;
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(rows + 2, |p| p.line() as usize);
        if rec.len() != width {
            return Err(parse_err(path, line, format!("expected {width} fields, found {}", rec.len())));
        }
        for (field, name) in rec.iter().zip(&header) {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(path, line, format!("column '{name}': '{field}' is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(path, line, format!("column '{name}': non-finite value")));
            }
            values.push(v);
        }
        rows += 1;
    }
    Ok(Table { header, values, rows })
}

/// Reads a labeled CSV. The class count is `n_classes` when given,
/// otherwise the largest label present.
pub fn read_labeled_csv(path: impl AsRef<Path>, n_classes: Option<usize>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let t = read_table(path)?;
    labeled_from_table(path, t, n_classes)
}

fn labeled_from_table(path: &Path, t: Table, n_classes: Option<usize>) -> Result<LabeledDataset> {
    if t.header.last().map(String::as_str) != Some(LABEL_COLUMN) {
        return Err(parse_err(path, 1, format!("last column must be '{LABEL_COLUMN}'")));
    }
    let width = t.header.len();
    let p = width - 1;
    if p == 0 {
        return Err(parse_err(path, 1, "no feature columns"));
    }
    let mut x = Vec::with_capacity(t.rows * p);
    let mut labels = Vec::with_capacity(t.rows);
    for (r, row) in t.values.chunks_exact(width).enumerate() {
        let l = row[p];
        if l < 1.0 || l.fract() != 0.0 {
            return Err(parse_err(path, r + 2, format!("label {l} is not a positive integer")));
        }
        labels.push(l as usize - 1);
        x.extend_from_slice(&row[..p]);
    }
    let present = labels.iter().max().map_or(0, |m| m + 1);
    let k = match n_classes {
        Some(k) if present > k => {
            return Err(parse_err(path, 0, format!("label {present} exceeds the {k} classes of the model")))
        }
        Some(k) => k,
        None if present == 0 => return Err(parse_err(path, 0, "no labeled rows")),
        None => present,
    };
    let names = t.header[..p].to_vec();
    LabeledDataset::new(p, x, labels, k)?.with_feature_names(names)
}

/// Feature rows with optional labels (a trailing `label` column is split off).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub names: Vec<String>,
    pub values: Vec<f64>,
    pub rows: usize,
    pub labels: Option<Vec<usize>>,
}

impl FeatureTable {
    pub fn p(&self) -> usize {
        self.names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.p();
        &self.values[i * p..(i + 1) * p]
    }
}

/// Reads a feature CSV. An entirely empty file reads as zero rows.
pub fn read_features_csv(path: impl AsRef<Path>) -> Result<FeatureTable> {
    let path = path.as_ref();
    let mut text = String::new();
    File::open(path).and_then(|mut f| f.read_to_string(&mut text)).map_err(io_err(path))?;
    if text.trim().is_empty() {
        return Ok(FeatureTable { names: vec![], values: vec![], rows: 0, labels: None });
    }
    let t = parse_table(path, &text)?;
    if t.header.last().map(String::as_str) != Some(LABEL_COLUMN) {
        return Ok(FeatureTable { names: t.header, values: t.values, rows: t.rows, labels: None });
    }
    let width = t.header.len();
    let p = width - 1;
    let mut values = Vec::with_capacity(t.rows * p);
    let mut labels = Vec::with_capacity(t.rows);
    for (r, row) in t.values.chunks_exact(width).enumerate() {
        let l = row[p];
        if l < 1.0 || l.fract() != 0.0 {
            return Err(parse_err(path, r + 2, format!("label {l} is not a positive integer")));
        }
        labels.push(l as usize - 1);
        values.extend_from_slice(&row[..p]);
    }
    Ok(FeatureTable { names: t.header[..p].to_vec(), values, rows: t.rows, labels: Some(labels) })
}

pub fn default_feature_names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("x{j}")).collect()
}

/// Labeled CSV text: header, values with 17 significant digits, 1-based labels.
pub fn labeled_csv_string(d: &LabeledDataset) -> String {
    let names = d.feature_names().map(<[String]>::to_vec).unwrap_or_else(|| default_feature_names(d.p()));
    let mut out = String::with_capacity(d.n() * d.p() * 24 + 64);
    out.push_str(&names.join(","));
    out.push(',');
    out.push_str(LABEL_COLUMN);
    out.push('\n');
    for (row, &l) in d.rows().zip(d.labels()) {
        for v in row {
            out.push_str(&format_value(*v));
            out.push(',');
        }
        out.push_str(&(l + 1).to_string());
        out.push('\n');
    }
    out
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    File::create(path).and_then(|mut f| f.write_all(text.as_bytes())).map_err(io_err(path))
}

pub fn read_text(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    std::fs::read_to_string(path).map_err(io_err(path))
}

pub fn write_labeled_csv(path: impl AsRef<Path>, d: &LabeledDataset) -> Result<()> {
    write_text(path, &labeled_csv_string(d))
}

/// Fails with an IO error unless `dir` is an existing directory.
pub fn require_dir(dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    match std::fs::metadata(dir) {
        Ok(m) if m.is_dir() => Ok(dir.to_path_buf()),
        Ok(_) => Err(Error::Io {
            path: dir.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotADirectory, "not a directory"),
        }),
        Err(e) => Err(Error::Io { path: dir.to_path_buf(), source: e }),
    }
}

/// Feature transforms applied before fitting and again before predicting.
/// Column averaging runs first, then the log transform.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Preprocessing {
    /// `x ↦ ln(x + offset)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_offset: Option<f64>,
    /// Each output feature is the mean of these 0-based input columns.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub average_groups: Option<Vec<Vec<usize>>>,
    /// Input feature count the transform expects.
    pub input_features: usize,
}

impl Preprocessing {
    pub fn identity(p: usize) -> Self {
        Preprocessing { input_features: p, ..Default::default() }
    }

    pub fn is_identity(&self) -> bool {
        self.log_offset.is_none() && self.average_groups.is_none()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(off) = self.log_offset {
            if !off.is_finite() {
                return Err(Error::invalid("log offset must be finite"));
            }
        }
        if let Some(groups) = &self.average_groups {
            if groups.is_empty() || groups.iter().any(Vec::is_empty) {
                return Err(Error::invalid("column groups must be non-empty"));
            }
            if let Some(&bad) = groups.iter().flatten().find(|&&c| c >= self.input_features) {
                return Err(Error::invalid(format!(
                    "column group refers to column {} but the data has {}",
                    bad + 1,
                    self.input_features
                )));
            }
        }
        Ok(())
    }

    pub fn output_features(&self) -> usize {
        self.average_groups.as_ref().map_or(self.input_features, Vec::len)
    }

    pub fn output_names(&self, input: &[String]) -> Vec<String> {
        match &self.average_groups {
            None => input.to_vec(),
            Some(groups) => groups
                .iter()
                .map(|g| format!("avg({})", g.iter().map(|&c| input[c].as_str()).collect::<Vec<_>>().join("+")))
                .collect(),
        }
    }

    pub fn apply_row(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_features {
            return Err(Error::invalid(format!(
                "observation has {} features, expected {}",
                x.len(),
                self.input_features
            )));
        }
        let mut out = match &self.average_groups {
            None => x.to_vec(),
            Some(groups) => groups.iter().map(|g| g.iter().map(|&c| x[c]).sum::<f64>() / g.len() as f64).collect(),
        };
        if let Some(off) = self.log_offset {
            for v in &mut out {
                let shifted = *v + off;
                if shifted <= 0.0 {
                    return Err(Error::invalid(format!("log({} + {off}) is undefined", *v)));
                }
                *v = shifted.ln();
            }
        }
        Ok(out)
    }

    pub fn apply(&self, d: &LabeledDataset) -> Result<LabeledDataset> {
        if self.is_identity() {
            return Ok(d.clone());
        }
        let mut x = Vec::with_capacity(d.n() * self.output_features());
        for row in d.rows() {
            x.extend(self.apply_row(row)?);
        }
        let out = LabeledDataset::new(self.output_features(), x, d.labels().to_vec(), d.n_classes())?;
        match d.feature_names() {
            Some(names) => out.with_feature_names(self.output_names(names)),
            None => Ok(out),
        }
    }
}

/// Parses a column-group file: one output feature per line, listing 1-based
/// input columns separated by commas or whitespace. `#` starts a comment.
pub fn read_column_groups(path: impl AsRef<Path>) -> Result<Vec<Vec<usize>>> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let mut groups = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let group = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| match t.parse::<usize>() {
                Ok(c) if c >= 1 => Ok(c - 1),
                _ => Err(parse_err(path, i + 1, format!("'{t}' is not a 1-based column index"))),
            })
            .collect::<Result<Vec<_>>>()?;
        groups.push(group);
    }
    if groups.is_empty() {
        return Err(parse_err(path, 0, "no column groups"));
    }
    Ok(groups)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labeled_round_trip_is_bit_exact() {
        let vals = [0.1, 1.0 / 3.0, -2.5e-300, 123_456_789.123_456_79, f64::MIN_POSITIVE, -0.0];
        let rows: Vec<Vec<f64>> = vals.chunks(2).map(<[f64]>::to_vec).collect();
        let d = LabeledDataset::from_rows(&rows, vec![0, 2, 1], 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_labeled_csv(&path, &d).unwrap();
        let back = read_labeled_csv(&path, None).unwrap();
        assert_eq!(back.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>(), d.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_eq!(back.labels(), d.labels());
        assert_eq!(back.feature_names().unwrap(), &["x1".to_string(), "x2".to_string()]);
    }

    #[test]
    fn parse_errors_carry_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        write_text(&path, "a,b,label\n1,2,1\n3,oops,2\n").unwrap();
        let err = read_labeled_csv(&path, None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        write_text(&path, "a,b\n1,2\n").unwrap();
        assert!(matches!(read_labeled_csv(&path, None), Err(Error::Parse { line: 1, .. })));
        write_text(&path, "a,label\n1,0\n").unwrap();
        assert!(matches!(read_labeled_csv(&path, None), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(read_labeled_csv(dir.path().join("missing.csv"), None), Err(Error::Io { .. })));
    }

    #[test]
    fn feature_tables() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        write_text(&path, "a,b\n1,2\n3,4\n").unwrap();
        let t = read_features_csv(&path).unwrap();
        assert_eq!((t.rows, t.p(), t.labels.is_none()), (2, 2, true));
        write_text(&path, "a,b,label\n").unwrap();
        let t = read_features_csv(&path).unwrap();
        assert_eq!((t.rows, t.p()), (0, 2));
        write_text(&path, "").unwrap();
        assert_eq!(read_features_csv(&path).unwrap().rows, 0);
    }

    #[test]
    fn preprocessing() {
        let d = LabeledDataset::from_rows(&[vec![0.9, 1.9, 3.0], vec![0.0, 0.0, 1.0]], vec![0, 1], 2).unwrap();
        let pre = Preprocessing { log_offset: Some(0.1), average_groups: Some(vec![vec![0, 1], vec![2]]), input_features: 3 };
        pre.validate().unwrap();
        let out = pre.apply(&d).unwrap();
        assert_eq!(out.p(), 2);
        assert!((out.row(0)[0] - 1.5f64.ln()).abs() < 1e-15);
        assert!((out.row(1)[0] - 0.1f64.ln()).abs() < 1e-15);
        let bad = Preprocessing { log_offset: Some(0.0), average_groups: None, input_features: 3 };
        assert!(bad.apply(&d).is_err());
        let oob = Preprocessing { average_groups: Some(vec![vec![5]]), ..Preprocessing::identity(3) };
        assert!(oob.validate().is_err());
    }

    #[test]
    fn group_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.txt");
        write_text(&path, "# 2x2 blocks\n1,2\n3 4\n\n5\n").unwrap();
        assert_eq!(read_column_groups(&path).unwrap(), vec![vec![0, 1], vec![2, 3], vec![4]]);
        write_text(&path, "0,1\n").unwrap();
        assert!(matches!(read_column_groups(&path), Err(Error::Parse { line: 1, .. })));
    }
}

use crate::error::{Error, Result};

/// `n` observations of `p` features with class indices in `0..n_classes`.
///
/// Classes are 0-based inside the library; CSV files and predictions use
/// 1-based labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    n: usize,
    p: usize,
    /// Row-major `n × p`.
    x: Vec<f64>,
    labels: Vec<usize>,
    n_classes: usize,
    feature_names: Option<Vec<String>>,
}

impl LabeledDataset {
    pub fn new(p: usize, x: Vec<f64>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::invalid("dataset needs at least one feature"));
        }
        if n_classes == 0 {
            return Err(Error::invalid("dataset needs at least one class"));
        }
        if x.len() != labels.len() * p {
            return Err(Error::invalid(format!(
                "{} values do not form {} rows of {p} features",
                x.len(),
                labels.len()
            )));
        }
        if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite value at row {}, column {}",
                pos / p,
                pos % p
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::invalid(format!(
                "class index {bad} out of range for {n_classes} classes"
            )));
        }
        Ok(LabeledDataset { n: labels.len(), p, x, labels, n_classes, feature_names: None })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::invalid("rows have unequal lengths"));
        }
        Self::new(p, rows.concat(), labels, n_classes)
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.p {
            return Err(Error::invalid(format!("{} names for {} features", names.len(), self.p)));
        }
        self.feature_names = Some(names);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.x.chunks_exact(self.p)
    }

    pub fn values(&self) -> &[f64] {
        &self.x
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_classes];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }

    /// Row indices of class `k`.
    pub fn class_rows(&self, k: usize) -> Vec<usize> {
        (0..self.n).filter(|&i| self.labels[i] == k).collect()
    }

    /// Rows at `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> LabeledDataset {
        let mut x = Vec::with_capacity(idx.len() * self.p);
        for &i in idx {
            x.extend_from_slice(self.row(i));
        }
        LabeledDataset {
            n: idx.len(),
            p: self.p,
            x,
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
            feature_names: self.feature_names.clone(),
        }
    }

    /// Feature columns at `cols`, in that order.
    pub fn select_features(&self, cols: &[usize]) -> LabeledDataset {
        let mut x = Vec::with_capacity(self.n * cols.len());
        for row in self.rows() {
            x.extend(cols.iter().map(|&c| row[c]));
        }
        LabeledDataset {
            n: self.n,
            p: cols.len(),
            x,
            labels: self.labels.clone(),
            n_classes: self.n_classes,
            feature_names: self
                .feature_names
                .as_ref()
                .map(|names| cols.iter().map(|&c| names[c].clone()).collect()),
        }
    }

    /// Concatenates rows of datasets with equal `p` and class count.
    pub fn concat(parts: &[&LabeledDataset]) -> Result<LabeledDataset> {
        let first = parts.first().ok_or_else(|| Error::invalid("nothing to concatenate"))?;
        if parts.iter().any(|d| d.p != first.p || d.n_classes != first.n_classes) {
            return Err(Error::invalid("datasets differ in shape"));
        }
        let mut out = (*first).clone();
        for d in &parts[1..] {
            out.x.extend_from_slice(&d.x);
            out.labels.extend_from_slice(&d.labels);
            out.n += d.n;
        }
        Ok(out)
    }

    #[cfg(test)]
    pub(crate) fn map_values(&self, f: impl Fn(usize, f64) -> f64) -> LabeledDataset {
        let p = self.p;
        let x = self.x.iter().enumerate().map(|(pos, &v)| f(pos % p, v)).collect();
        LabeledDataset { x, ..self.clone() }
    }
}

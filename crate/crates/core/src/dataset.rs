//! Labeled vector datasets: CSV ingestion/emission, class statistics,
//! stratified folds and z-score standardization.

use std::cmp::Ordering;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{shape, RcsError, Result};
use crate::linalg::Vector;
use crate::rng::Seed;

/// Column layout of the CSV a dataset was read from, reused on output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    /// Names of all columns including the label; `None` when the file had no header.
    pub header: Option<Vec<String>>,
    /// Position of the label column.
    pub label_col: usize,
}

/// Feature rows with dense class indices `0..K`.
///
/// `label_names[c]` is the original label string for class `c`. Rows flagged
/// `synthetic` were produced by an oversampler.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Vec<Vector>,
    labels: Vec<usize>,
    synthetic: Vec<bool>,
    label_names: Vec<String>,
    schema: Option<CsvSchema>,
}

impl LabeledDataset {
    pub fn new(features: Vec<Vector>, labels: Vec<usize>, label_names: Vec<String>) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(shape(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        let d = features.first().map_or(0, Vec::len);
        if features.iter().any(|r| r.len() != d) {
            return Err(shape("feature rows have different dimensions"));
        }
        if !features.is_empty() && d == 0 {
            return Err(shape("feature dimension must be at least 1"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= label_names.len()) {
            return Err(RcsError::InvalidArgument(format!(
                "label {bad} out of range for {} classes",
                label_names.len()
            )));
        }
        let synthetic = vec![false; labels.len()];
        Ok(LabeledDataset { features, labels, synthetic, label_names, schema: None })
    }

    /// Dataset with labels named `"0".."K-1"`.
    pub fn from_parts(features: Vec<Vector>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        Self::new(features, labels, (0..n_classes).map(|c| c.to_string()).collect())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn n_classes(&self) -> usize {
        self.label_names.len()
    }

    pub fn features(&self) -> &[Vector] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn synthetic(&self) -> &[bool] {
        &self.synthetic
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn schema(&self) -> Option<&CsvSchema> {
        self.schema.as_ref()
    }

    pub fn with_schema(mut self, schema: Option<CsvSchema>) -> Self {
        self.schema = schema;
        self
    }

    pub fn n_synthetic(&self) -> usize {
        self.synthetic.iter().filter(|&&s| s).count()
    }

    /// Rows of class `c`, in dataset order.
    pub fn class_rows(&self, c: usize) -> Vec<Vector> {
        self.features
            .iter()
            .zip(&self.labels)
            .filter(|(_, &l)| l == c)
            .map(|(x, _)| x.clone())
            .collect()
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            synthetic: indices.iter().map(|&i| self.synthetic[i]).collect(),
            label_names: self.label_names.clone(),
            schema: self.schema.clone(),
        }
    }

    /// Same labels and metadata, new feature rows (possibly of another dimension).
    pub fn with_features(&self, features: Vec<Vector>) -> Result<LabeledDataset> {
        if features.len() != self.len() {
            return Err(shape("replacement features must keep the row count"));
        }
        let d = features.first().map_or(0, Vec::len);
        if features.iter().any(|r| r.len() != d) {
            return Err(shape("feature rows have different dimensions"));
        }
        let schema = if d == self.dim() { self.schema.clone() } else { None };
        Ok(LabeledDataset { features, schema, ..self.clone() })
    }

    /// Append rows for class `label`, flagged synthetic.
    pub fn push_synthetic(&mut self, label: usize, rows: Vec<Vector>) -> Result<()> {
        if label >= self.n_classes() {
            return Err(RcsError::InvalidArgument(format!("label {label} out of range")));
        }
        let d = self.dim();
        if rows.iter().any(|r| r.len() != d) {
            return Err(shape("synthetic rows have the wrong dimension"));
        }
        for r in rows {
            self.features.push(r);
            self.labels.push(label);
            self.synthetic.push(true);
        }
        Ok(())
    }

    /// Per-class counts indexed by dense label.
    pub fn counts_by_label(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

/// Which column holds the class label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    Name(String),
    Index(usize),
    Last,
}

impl std::str::FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s {
            "last" | "" => LabelColumn::Last,
            _ => match s.parse::<usize>() {
                Ok(i) => LabelColumn::Index(i),
                Err(_) => LabelColumn::Name(s.to_string()),
            },
        })
    }
}

pub fn load_csv(path: impl AsRef<Path>, label: &LabelColumn, has_header: bool) -> Result<LabeledDataset> {
    let file = std::fs::File::open(path)?;
    read_csv(file, label, has_header)
}

/// Parse comma-separated rows. Labels are re-encoded densely in first-seen order.
pub fn read_csv<R: Read>(reader: R, label: &LabelColumn, has_header: bool) -> Result<LabeledDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();

    let header: Option<Vec<String>> = if has_header {
        match records.next() {
            Some(rec) => Some(rec?.iter().map(str::to_string).collect()),
            None => return Err(RcsError::EmptyInput("csv file is empty".into())),
        }
    } else {
        None
    };

    let mut width = header.as_ref().map(Vec::len);
    let mut label_col = None;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut names: Vec<String> = Vec::new();
    let line_offset = usize::from(has_header) + 1;

    for (row, rec) in records.enumerate() {
        let rec = rec?;
        if rec.len() == 1 && rec.get(0) == Some("") {
            continue;
        }
        let w = *width.get_or_insert(rec.len());
        if rec.len() != w {
            return Err(shape(format!(
                "line {} has {} columns, expected {w}",
                row + line_offset,
                rec.len()
            )));
        }
        let lc = match label_col {
            Some(c) => c,
            None => {
                let c = resolve_label_column(label, header.as_deref(), w)?;
                label_col = Some(c);
                c
            }
        };
        let mut x = Vec::with_capacity(w - 1);
        for (col, field) in rec.iter().enumerate() {
            if col == lc {
                continue;
            }
            let v: f64 = field.parse().map_err(|_| RcsError::ParseError {
                row: row + line_offset,
                col,
                msg: format!("'{field}' is not a real number"),
            })?;
            if !v.is_finite() {
                return Err(RcsError::ParseError {
                    row: row + line_offset,
                    col,
                    msg: "non-finite value".into(),
                });
            }
            x.push(v);
        }
        let name = rec.get(lc).unwrap_or_default();
        let idx = match names.iter().position(|n| n == name) {
            Some(i) => i,
            None => {
                names.push(name.to_string());
                names.len() - 1
            }
        };
        features.push(x);
        labels.push(idx);
    }
    if features.is_empty() {
        return Err(RcsError::EmptyInput("csv file has no data rows".into()));
    }
    let schema = CsvSchema { header, label_col: label_col.unwrap_or(0) };
    Ok(LabeledDataset::new(features, labels, names)?.with_schema(Some(schema)))
}

fn resolve_label_column(label: &LabelColumn, header: Option<&[String]>, width: usize) -> Result<usize> {
    let col = match label {
        LabelColumn::Last => width.checked_sub(1),
        LabelColumn::Index(i) => Some(*i).filter(|&i| i < width),
        LabelColumn::Name(name) => {
            let header = header.ok_or_else(|| {
                RcsError::InvalidArgument("label column by name requires a header".into())
            })?;
            header.iter().position(|h| h == name)
        }
    };
    let col = col.ok_or_else(|| RcsError::InvalidArgument(format!("label column {label:?} not found")))?;
    if width < 2 {
        return Err(shape("need at least one feature column besides the label"));
    }
    Ok(col)
}

/// Write rows in the input schema plus a trailing `synthetic` 0/1 column.
pub fn write_csv<W: Write>(ds: &LabeledDataset, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    let d = ds.dim();
    let (header, label_col) = match ds.schema() {
        Some(s) if s.label_col <= d => (s.header.clone(), s.label_col),
        _ => {
            let mut h: Vec<String> = (0..d).map(|j| format!("f{j}")).collect();
            h.push("label".into());
            (Some(h), d)
        }
    };
    if let Some(mut h) = header {
        h.push("synthetic".into());
        w.write_record(&h)?;
    }
    for ((x, &l), &syn) in ds.features().iter().zip(ds.labels()).zip(ds.synthetic()) {
        let mut rec: Vec<String> = Vec::with_capacity(d + 2);
        for (j, v) in x.iter().enumerate() {
            if j == label_col {
                rec.push(ds.label_names()[l].clone());
            }
            rec.push(format_real(*v));
        }
        if label_col == d {
            rec.push(ds.label_names()[l].clone());
        }
        rec.push(if syn { "1".into() } else { "0".into() });
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(ds: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv(ds, std::io::BufWriter::new(file))
}

fn format_real(v: f64) -> String {
    // shortest round-trip representation
    format!("{v:?}")
}

/// Class sizes sorted by count descending, ties by original label ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCounts {
    /// `(dense label, count)` pairs.
    pub ordered: Vec<(usize, usize)>,
    pub n1: usize,
    pub nk: usize,
}

impl ClassCounts {
    pub fn total(&self) -> usize {
        self.ordered.iter().map(|&(_, n)| n).sum()
    }

    pub fn count_of(&self, label: usize) -> Option<usize> {
        self.ordered.iter().find(|&&(l, _)| l == label).map(|&(_, n)| n)
    }

    pub fn imbalance_ratio(&self) -> f64 {
        self.n1 as f64 / self.nk as f64
    }
}

fn compare_label_names(a: &str, b: &str) -> Ordering {
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x.partial_cmp(&y).unwrap_or(Ordering::Equal).then_with(|| a.cmp(b)),
        _ => a.cmp(b),
    }
}

/// Classes present in `ds`, largest first.
pub fn class_counts(ds: &LabeledDataset) -> Result<ClassCounts> {
    if ds.is_empty() {
        return Err(RcsError::EmptyInput("class counts of an empty dataset".into()));
    }
    let names = ds.label_names();
    let mut ordered: Vec<(usize, usize)> = ds
        .counts_by_label()
        .into_iter()
        .enumerate()
        .filter(|&(_, n)| n > 0)
        .collect();
    ordered.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| compare_label_names(&names[a.0], &names[b.0])));
    let n1 = ordered[0].1;
    let nk = ordered[ordered.len() - 1].1;
    Ok(ClassCounts { ordered, n1, nk })
}

/// Fold index for every row of a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: Vec<usize>,
}

impl FoldPlan {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&i| self.assignments[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&i| self.assignments[i] != fold).collect()
    }

    /// `(train, test)` for one fold.
    pub fn split(&self, ds: &LabeledDataset, fold: usize) -> (LabeledDataset, LabeledDataset) {
        (ds.subset(&self.train_indices(fold)), ds.subset(&self.test_indices(fold)))
    }
}

/// Seeded per-class shuffle followed by round-robin fold assignment.
pub fn stratified_kfold(ds: &LabeledDataset, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(RcsError::InvalidArgument(format!("k must be >= 2, got {k}")));
    }
    let counts = ds.counts_by_label();
    if let Some((c, &n)) = counts.iter().enumerate().find(|&(_, &n)| n > 0 && n < k) {
        return Err(RcsError::InsufficientSamples(format!(
            "class {} has {n} samples, fewer than {k} folds",
            ds.label_names()[c]
        )));
    }
    let root = Seed::new(seed).child("stratified_kfold");
    let mut assignments = vec![0; ds.len()];
    let mut offset = 0;
    for c in 0..ds.n_classes() {
        let mut idx: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels()[i] == c).collect();
        idx.shuffle(&mut root.index(c as u64).rng());
        for (pos, &i) in idx.iter().enumerate() {
            assignments[i] = (offset + pos) % k;
        }
        offset = (offset + idx.len()) % k;
    }
    Ok(FoldPlan { k, assignments })
}

/// Per-feature z-score parameters fitted on a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vector,
    pub std: Vector,
}

const STD_FLOOR: f64 = 1e-12;

impl Standardizer {
    /// Population (divisor N) statistics.
    pub fn fit(rows: &[Vector]) -> Result<Standardizer> {
        let mean = crate::linalg::mean_vector(rows)?;
        let n = rows.len() as f64;
        let mut var = vec![0.0; mean.len()];
        for r in rows {
            for (v, (x, m)) in var.iter_mut().zip(r.iter().zip(&mean)) {
                *v += (x - m) * (x - m);
            }
        }
        let std = var
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                // constant columns: x - mean is already 0 on the training rows
                if s < STD_FLOOR {
                    1.0
                } else {
                    s
                }
            })
            .collect();
        Ok(Standardizer { mean, std })
    }

    pub fn transform_row(&self, x: &[f64]) -> Vector {
        x.iter().zip(self.mean.iter().zip(&self.std)).map(|(v, (m, s))| (v - m) / s).collect()
    }

    pub fn inverse_row(&self, z: &[f64]) -> Vector {
        z.iter().zip(self.mean.iter().zip(&self.std)).map(|(v, (m, s))| v * s + m).collect()
    }

    pub fn apply(&self, ds: &LabeledDataset) -> Result<LabeledDataset> {
        if ds.dim() != self.mean.len() && !ds.is_empty() {
            return Err(shape("standardizer and dataset dimensions differ"));
        }
        ds.with_features(ds.features().iter().map(|x| self.transform_row(x)).collect())
    }

    pub fn inverse(&self, ds: &LabeledDataset) -> Result<LabeledDataset> {
        ds.with_features(ds.features().iter().map(|x| self.inverse_row(x)).collect())
    }
}

pub fn standardize_fit_transform(train: &LabeledDataset) -> Result<(Standardizer, LabeledDataset)> {
    let s = Standardizer::fit(train.features())?;
    let out = s.apply(train)?;
    Ok((s, out))
}

pub fn standardize_apply(s: &Standardizer, ds: &LabeledDataset) -> Result<LabeledDataset> {
    s.apply(ds)
}

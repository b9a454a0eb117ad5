//! Dataset ingestion, label encoding, standardization and fold assignment.

use std::path::Path;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A binary classification training set with ±1 labels.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    /// n×d feature matrix.
    pub features: Array2<f64>,
    /// Length-n labels, every entry −1 or +1.
    pub labels: Array1<i8>,
    /// Column names from the CSV header, when known.
    pub feature_names: Option<Vec<String>>,
}

impl TrainingSet {
    pub fn new(features: Array2<f64>, labels: Array1<i8>) -> Result<Self> {
        let set = TrainingSet { features, labels, feature_names: None };
        set.validate()?;
        Ok(set)
    }

    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    /// Row subset in the given index order.
    pub fn subset(&self, idx: &[usize]) -> TrainingSet {
        let d = self.n_features();
        let mut features = Array2::zeros((idx.len(), d));
        let mut labels = Array1::zeros(idx.len());
        for (r, &i) in idx.iter().enumerate() {
            features.row_mut(r).assign(&self.features.row(i));
            labels[r] = self.labels[i];
        }
        TrainingSet { features, labels, feature_names: self.feature_names.clone() }
    }

    fn validate(&self) -> Result<()> {
        let n = self.n_samples();
        if n < 2 || self.n_features() == 0 {
            return Err(Error::ConfigError(format!(
                "training set needs n >= 2 and d >= 1, got n = {n}, d = {}",
                self.n_features()
            )));
        }
        if self.labels.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: self.labels.len() });
        }
        let mut pos = 0usize;
        let mut neg = 0usize;
        for &y in &self.labels {
            match y {
                1 => pos += 1,
                -1 => neg += 1,
                other => {
                    return Err(Error::ConfigError(format!("label {other} is not in {{-1, +1}}")))
                }
            }
        }
        if pos == 0 || neg == 0 {
            return Err(Error::SingleClassData(if pos == 0 { "-1" } else { "+1" }.into()));
        }
        if self.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::ConfigError("non-finite feature value".into()));
        }
        Ok(())
    }
}

/// Which CSV column holds the class label.
#[derive(Debug, Clone)]
pub enum LabelColumn {
    Name(String),
    Index(usize),
}

impl std::str::FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(s.to_string()),
        })
    }
}

/// Loads a headered CSV file, encoding `positive_label` rows as +1 and the
/// single other observed label value as −1. Missing or non-numeric feature
/// cells are hard errors.
pub fn load_csv(
    path: impl AsRef<Path>,
    label_column: &LabelColumn,
    positive_label: &str,
) -> Result<TrainingSet> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if headers.is_empty() {
        return Err(Error::EmptyFile(path.display().to_string()));
    }
    let label_idx = match label_column {
        LabelColumn::Name(name) => headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.clone()))?,
        LabelColumn::Index(i) => {
            if *i >= headers.len() {
                return Err(Error::MissingColumn(format!("index {i}")));
            }
            *i
        }
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut raw_labels: Vec<String> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::ConfigError(format!(
                "row {r} has {} fields, header has {}",
                record.len(),
                headers.len()
            )));
        }
        let mut row = Vec::with_capacity(headers.len() - 1);
        for (c, field) in record.iter().enumerate() {
            if c == label_idx {
                raw_labels.push(field.trim().to_string());
                continue;
            }
            let field = field.trim();
            if field.is_empty() {
                return Err(Error::NonNumericFeature { row: r, col: c, value: String::new() });
            }
            let v: f64 = field.parse().map_err(|_| Error::NonNumericFeature {
                row: r,
                col: c,
                value: field.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonNumericFeature { row: r, col: c, value: field.to_string() });
            }
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptyFile(path.display().to_string()));
    }

    let mut distinct: Vec<&String> = Vec::new();
    for l in &raw_labels {
        if !distinct.contains(&l) {
            distinct.push(l);
        }
    }
    match distinct.len() {
        1 => return Err(Error::SingleClassData(distinct[0].clone())),
        2 => {}
        k => return Err(Error::MultiClassData(k)),
    }
    if !distinct.iter().any(|l| l.as_str() == positive_label) {
        return Err(Error::ConfigError(format!(
            "positive label {positive_label:?} not among observed labels {distinct:?}"
        )));
    }

    let d = headers.len() - 1;
    let n = rows.len();
    let mut features = Array2::zeros((n, d));
    for (r, row) in rows.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            features[[r, c]] = v;
        }
    }
    let labels =
        Array1::from_iter(raw_labels.iter().map(|l| if l == positive_label { 1i8 } else { -1i8 }));
    let mut names = headers;
    names.remove(label_idx);

    let mut set = TrainingSet::new(features, labels)?;
    set.feature_names = Some(names);
    Ok(set)
}

/// Per-column mean/std transform fitted on a training split.
///
/// Constant columns (zero std) are flagged and mapped to zero rather than
/// divided through.
#[derive(Debug, Clone)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub std_devs: Vec<f64>,
    pub constant: Vec<bool>,
}

/// Fits population mean/std per column.
pub fn fit_standardizer(train: &TrainingSet) -> Standardizer {
    let n = train.n_samples() as f64;
    let d = train.n_features();
    let mut means = vec![0.0; d];
    let mut std_devs = vec![0.0; d];
    let mut constant = vec![false; d];
    for c in 0..d {
        let col = train.features.column(c);
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        means[c] = mean;
        if std > 0.0 {
            std_devs[c] = std;
        } else {
            std_devs[c] = 1.0;
            constant[c] = true;
        }
    }
    Standardizer { means, std_devs, constant }
}

/// Applies a fitted transform; errors if the feature count differs.
pub fn apply_standardizer(s: &Standardizer, set: &TrainingSet) -> Result<TrainingSet> {
    if set.n_features() != s.means.len() {
        return Err(Error::DimensionMismatch { expected: s.means.len(), got: set.n_features() });
    }
    let mut features = set.features.clone();
    for c in 0..s.means.len() {
        let mut col = features.column_mut(c);
        if s.constant[c] {
            col.fill(0.0);
        } else {
            col.mapv_inplace(|v| (v - s.means[c]) / s.std_devs[c]);
        }
    }
    Ok(TrainingSet { features, labels: set.labels.clone(), feature_names: set.feature_names.clone() })
}

/// Inverts [`apply_standardizer`]. Constant columns are restored to their
/// fitted mean.
pub fn invert_standardizer(s: &Standardizer, set: &TrainingSet) -> Result<TrainingSet> {
    if set.n_features() != s.means.len() {
        return Err(Error::DimensionMismatch { expected: s.means.len(), got: set.n_features() });
    }
    let mut features = set.features.clone();
    for c in 0..s.means.len() {
        let mut col = features.column_mut(c);
        if s.constant[c] {
            col.fill(s.means[c]);
        } else {
            col.mapv_inplace(|v| v * s.std_devs[c] + s.means[c]);
        }
    }
    Ok(TrainingSet { features, labels: set.labels.clone(), feature_names: set.feature_names.clone() })
}

/// Deterministic stratified fold assignment.
#[derive(Debug, Clone)]
pub struct FoldAssignment {
    /// fold_of[i] ∈ [0, k) for sample i.
    pub fold_of: Vec<usize>,
    pub k: usize,
    pub seed: u64,
}

impl FoldAssignment {
    /// Indices held out by `fold` and the complementary training indices.
    pub fn split(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, &f) in self.fold_of.iter().enumerate() {
            if f == fold {
                test.push(i);
            } else {
                train.push(i);
            }
        }
        (train, test)
    }
}

/// Shuffles each class with a seeded generator and deals round-robin, so
/// per-fold class counts differ from perfect proportionality by at most one
/// sample and the output is a pure function of (labels, k, seed).
pub fn stratified_folds(labels: &[i8], k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::ConfigError(format!("fold count must be >= 2, got {k}")));
    }
    let mut pos: Vec<usize> = Vec::new();
    let mut neg: Vec<usize> = Vec::new();
    for (i, &y) in labels.iter().enumerate() {
        if y == 1 {
            pos.push(i);
        } else {
            neg.push(i);
        }
    }
    for (label, class) in [(1i8, &pos), (-1i8, &neg)] {
        if class.len() < k {
            return Err(Error::TooFewSamplesPerClass { label, count: class.len(), needed: k });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0usize; labels.len()];
    let mut next = 0usize;
    for class in [&mut pos, &mut neg] {
        class.shuffle(&mut rng);
        for &i in class.iter() {
            fold_of[i] = next % k;
            next += 1;
        }
    }
    Ok(FoldAssignment { fold_of, k, seed })
}

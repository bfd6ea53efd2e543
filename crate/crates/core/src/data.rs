//! Dataset ingestion, problem-instance collections, cross-validation folds,
//! and seeded synthetic generators.
//!
//! CSV layout: UTF-8, comma-separated, optional header row (detected when a
//! feature cell of the first row fails to parse as a number), last column is
//! the label. Classification labels are mapped to contiguous indices in
//! first-appearance order; the original tokens are kept for reporting.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("I/O error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("empty file: {0}")]
    EmptyFile(String),
    #[error("row {row}, column {col}: cannot parse {token:?} as a number")]
    NonNumericCell { row: usize, col: usize, token: String },
    #[error("row {row}, column {col}: value {value} is not finite")]
    NonFiniteCell { row: usize, col: usize, value: f64 },
    #[error("row {row} has {got} columns, expected {expected}")]
    RaggedRow { row: usize, got: usize, expected: usize },
    #[error("classification data needs at least 2 distinct labels, found {0}")]
    SingleClass(usize),
    #[error("dataset invalid: {0}")]
    Invalid(String),
    #[error("fold count {k} out of range for {n} examples (need 2 <= k <= n)")]
    BadFoldCount { k: usize, n: usize },
    #[error("unknown generator scheme {0:?}")]
    UnknownScheme(String),
    #[error("instances disagree on shape: {0}")]
    Heterogeneous(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classification,
    Regression,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Task::Classification => write!(f, "classification"),
            Task::Regression => write!(f, "regression"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum LabelData {
    /// Class indices stored 0-based; `names[i]` is the raw token that was
    /// mapped to class `i` (first-appearance order).
    Classes { labels: Vec<usize>, c: usize, names: Vec<String> },
    Targets(Vec<f64>),
}

/// A fixed-size labeled sample: an n-by-a feature matrix plus either class
/// indices or real targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    n: usize,
    a: usize,
    /// Row-major n*a matrix.
    features: Vec<f64>,
    labels: LabelData,
}

impl Dataset {
    pub fn new_classification(
        rows: Vec<Vec<f64>>,
        labels: Vec<usize>,
        c: usize,
        names: Vec<String>,
    ) -> Result<Self, DataError> {
        let (n, a, features) = flatten(rows)?;
        if labels.len() != n {
            return Err(DataError::Invalid(format!(
                "{} labels for {n} rows",
                labels.len()
            )));
        }
        if c < 2 {
            return Err(DataError::SingleClass(c));
        }
        if names.len() != c {
            return Err(DataError::Invalid(format!(
                "{} class names for c={c}",
                names.len()
            )));
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= c) {
            return Err(DataError::Invalid(format!("label {y} out of range [0, {c})")));
        }
        Ok(Self { n, a, features, labels: LabelData::Classes { labels, c, names } })
    }

    pub fn new_regression(rows: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self, DataError> {
        let (n, a, features) = flatten(rows)?;
        if targets.len() != n {
            return Err(DataError::Invalid(format!(
                "{} targets for {n} rows",
                targets.len()
            )));
        }
        if let Some(&t) = targets.iter().find(|t| !t.is_finite()) {
            return Err(DataError::Invalid(format!("non-finite target {t}")));
        }
        Ok(Self { n, a, features, labels: LabelData::Targets(targets) })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_attributes(&self) -> usize {
        self.a
    }

    pub fn task(&self) -> Task {
        match self.labels {
            LabelData::Classes { .. } => Task::Classification,
            LabelData::Targets(_) => Task::Regression,
        }
    }

    /// Number of classes; 0 for regression data.
    pub fn n_classes(&self) -> usize {
        match &self.labels {
            LabelData::Classes { c, .. } => *c,
            LabelData::Targets(_) => 0,
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.a..(i + 1) * self.a]
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.features[row * self.a + col]
    }

    pub fn class_labels(&self) -> Option<&[usize]> {
        match &self.labels {
            LabelData::Classes { labels, .. } => Some(labels),
            LabelData::Targets(_) => None,
        }
    }

    pub fn class_names(&self) -> Option<&[String]> {
        match &self.labels {
            LabelData::Classes { names, .. } => Some(names),
            LabelData::Targets(_) => None,
        }
    }

    pub fn targets(&self) -> Option<&[f64]> {
        match &self.labels {
            LabelData::Targets(t) => Some(t),
            LabelData::Classes { .. } => None,
        }
    }

    /// Class counts over the whole dataset.
    pub fn class_counts(&self) -> Option<Vec<u64>> {
        let labels = self.class_labels()?;
        let mut counts = vec![0u64; self.n_classes()];
        for &y in labels {
            counts[y] += 1;
        }
        Some(counts)
    }

    /// New dataset holding the given rows (indices may repeat; the
    /// selection must be nonempty).
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        assert!(!idx.is_empty(), "subset selection is empty");
        let mut features = Vec::with_capacity(idx.len() * self.a);
        for &i in idx {
            features.extend_from_slice(self.row(i));
        }
        let labels = match &self.labels {
            LabelData::Classes { labels, c, names } => LabelData::Classes {
                labels: idx.iter().map(|&i| labels[i]).collect(),
                c: *c,
                names: names.clone(),
            },
            LabelData::Targets(t) => LabelData::Targets(idx.iter().map(|&i| t[i]).collect()),
        };
        Dataset { n: idx.len(), a: self.a, features, labels }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("dataset serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, DataError> {
        serde_json::from_str(s).map_err(|e| DataError::Invalid(e.to_string()))
    }
}

fn flatten(rows: Vec<Vec<f64>>) -> Result<(usize, usize, Vec<f64>), DataError> {
    if rows.is_empty() {
        return Err(DataError::Invalid("no rows".into()));
    }
    let a = rows[0].len();
    if a == 0 {
        return Err(DataError::Invalid("no feature columns".into()));
    }
    let n = rows.len();
    let mut features = Vec::with_capacity(n * a);
    for (i, row) in rows.into_iter().enumerate() {
        if row.len() != a {
            return Err(DataError::RaggedRow { row: i + 1, got: row.len(), expected: a });
        }
        if let Some((j, &v)) = row.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(DataError::NonFiniteCell { row: i + 1, col: j + 1, value: v });
        }
        features.extend_from_slice(&row);
    }
    Ok((n, a, features))
}

/// An ordered list of datasets drawn from one problem domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceCollection {
    pub instances: Vec<Dataset>,
}

impl InstanceCollection {
    pub fn new(instances: Vec<Dataset>) -> Result<Self, DataError> {
        if instances.is_empty() {
            return Err(DataError::Invalid("empty instance collection".into()));
        }
        let a = instances[0].n_attributes();
        let task = instances[0].task();
        let c = instances[0].n_classes();
        for (i, d) in instances.iter().enumerate() {
            if d.task() != task {
                return Err(DataError::Heterogeneous(format!("instance {i} task {}", d.task())));
            }
            if d.n_attributes() != a {
                return Err(DataError::Heterogeneous(format!(
                    "instance {i} has {} attributes, expected {a}",
                    d.n_attributes()
                )));
            }
            if task == Task::Classification && d.n_classes() != c {
                return Err(DataError::Heterogeneous(format!(
                    "instance {i} has {} classes, expected {c}",
                    d.n_classes()
                )));
            }
        }
        Ok(Self { instances })
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }
}

/// Deterministic assignment of examples to cross-validation folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    /// `assignments[i]` is the fold of example `i`.
    pub assignments: Vec<usize>,
}

impl FoldPlan {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&i| self.assignments[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&i| self.assignments[i] != fold).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("fold plan serializes")
    }
}

/// Uniformly shuffled k-fold assignment; fold sizes differ by at most one
/// and the plan is a pure function of `(n, k, seed)`.
pub fn make_folds(d: &Dataset, k: usize, seed: u64) -> Result<FoldPlan, DataError> {
    let n = d.n();
    if k < 2 || k > n {
        return Err(DataError::BadFoldCount { k, n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut assignments = vec![0usize; n];
    for (pos, &example) in order.iter().enumerate() {
        assignments[example] = pos % k;
    }
    Ok(FoldPlan { k, seed, assignments })
}

/// Load a CSV file; the last column is the label, everything before it must
/// be numeric. Row/column positions in errors are 1-based and count the
/// header row if present.
pub fn load_csv<P: AsRef<Path>>(path: P, task: Task) -> Result<Dataset, DataError> {
    let path_str = path.as_ref().display().to_string();
    let text = std::fs::read_to_string(&path)
        .map_err(|source| DataError::Io { path: path_str.clone(), source })?;
    let mut lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
        .collect();
    if lines.is_empty() {
        return Err(DataError::EmptyFile(path_str));
    }

    // Header detection: the first row is a header when any feature cell is
    // non-numeric (label cells may legitimately be strings).
    let first_fields: Vec<&str> = lines[0].1.split(',').collect();
    if first_fields.len() < 2 {
        return Err(DataError::Invalid(format!(
            "{path_str}: need at least one feature column and a label column"
        )));
    }
    let feature_cols = first_fields.len() - 1;
    let header = first_fields[..feature_cols]
        .iter()
        .any(|cell| cell.trim().parse::<f64>().is_err())
        || (task == Task::Regression && first_fields[feature_cols].trim().parse::<f64>().is_err());
    if header {
        lines.remove(0);
        if lines.is_empty() {
            return Err(DataError::EmptyFile(path_str));
        }
    }

    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(lines.len());
    let mut raw_labels: Vec<String> = Vec::with_capacity(lines.len());
    for &(line_no, line) in &lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != feature_cols + 1 {
            return Err(DataError::RaggedRow {
                row: line_no,
                got: fields.len(),
                expected: feature_cols + 1,
            });
        }
        let mut row = Vec::with_capacity(feature_cols);
        for (j, cell) in fields[..feature_cols].iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| DataError::NonNumericCell {
                row: line_no,
                col: j + 1,
                token: cell.trim().to_string(),
            })?;
            if !v.is_finite() {
                return Err(DataError::NonFiniteCell { row: line_no, col: j + 1, value: v });
            }
            row.push(v);
        }
        rows.push(row);
        raw_labels.push(fields[feature_cols].trim().to_string());
    }

    match task {
        Task::Regression => {
            let mut targets = Vec::with_capacity(raw_labels.len());
            for (&(line_no, _), tok) in lines.iter().zip(&raw_labels) {
                let v: f64 = tok.parse().map_err(|_| DataError::NonNumericCell {
                    row: line_no,
                    col: feature_cols + 1,
                    token: tok.clone(),
                })?;
                targets.push(v);
            }
            Dataset::new_regression(rows, targets)
        }
        Task::Classification => {
            let mut names: Vec<String> = Vec::new();
            let mut labels = Vec::with_capacity(raw_labels.len());
            for tok in &raw_labels {
                let idx = match names.iter().position(|n| n == tok) {
                    Some(i) => i,
                    None => {
                        names.push(tok.clone());
                        names.len() - 1
                    }
                };
                labels.push(idx);
            }
            if names.len() < 2 {
                return Err(DataError::SingleClass(names.len()));
            }
            let c = names.len();
            Dataset::new_classification(rows, labels, c, names)
        }
    }
}

/// Named synthetic generators used as property-test inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthScheme {
    /// Three axis-separable Gaussian blobs in two dimensions.
    Blobs,
    /// Two classes on a 2x2 grid of clusters; not separable by one
    /// threshold, exactly fit by a depth-2 tree. Cluster masses are uneven
    /// so the column boundary carries strictly positive impurity gain.
    XorGrid,
    /// Blobs with 10% of the labels flipped.
    LabelNoiseBlobs,
    /// Regression clusters with nonnegative targets.
    RegressionClusters,
}

impl FromStr for SynthScheme {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, DataError> {
        match s {
            "blobs" => Ok(SynthScheme::Blobs),
            "xor-grid" => Ok(SynthScheme::XorGrid),
            "label-noise-blobs" => Ok(SynthScheme::LabelNoiseBlobs),
            "regression-clusters" => Ok(SynthScheme::RegressionClusters),
            other => Err(DataError::UnknownScheme(other.to_string())),
        }
    }
}

/// Generate `n_instances` datasets of `n` examples each; instance `i` uses
/// stream `i` of a ChaCha generator keyed by `seed`, so collections are
/// reproducible and instances independent.
pub fn synth_instances(
    scheme: SynthScheme,
    n_instances: usize,
    n: usize,
    seed: u64,
) -> Result<InstanceCollection, DataError> {
    if n_instances == 0 || n == 0 {
        return Err(DataError::Invalid("need n_instances >= 1 and n >= 1".into()));
    }
    let mut instances = Vec::with_capacity(n_instances);
    for i in 0..n_instances {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        instances.push(synth_one(scheme, n, &mut rng)?);
    }
    InstanceCollection::new(instances)
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; one value per call keeps the stream layout simple.
    let u1: f64 = rng.random::<f64>().max(1e-12);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn synth_one(scheme: SynthScheme, n: usize, rng: &mut ChaCha8Rng) -> Result<Dataset, DataError> {
    match scheme {
        SynthScheme::Blobs | SynthScheme::LabelNoiseBlobs => {
            let centers = [(0.0, 0.0), (4.0, 0.0), (0.0, 4.0)];
            let mut rows = Vec::with_capacity(n);
            let mut labels = Vec::with_capacity(n);
            for _ in 0..n {
                let k = rng.random_range(0..3usize);
                let (cx, cy) = centers[k];
                rows.push(vec![cx + gaussian(rng), cy + gaussian(rng)]);
                let mut y = k;
                if scheme == SynthScheme::LabelNoiseBlobs && rng.random::<f64>() < 0.1 {
                    y = rng.random_range(0..3usize);
                }
                labels.push(y);
            }
            // Guarantee every class appears so c is stable across instances.
            for k in 0..3 {
                if !labels.contains(&k) {
                    let (cx, cy) = centers[k];
                    rows.push(vec![cx, cy]);
                    labels.push(k);
                }
            }
            let names = (0..3).map(|k| format!("blob{k}")).collect();
            Dataset::new_classification(rows, labels, 3, names)
        }
        SynthScheme::XorGrid => {
            // Cluster masses 0.35/0.15 per column: the x boundary has gain
            // ~0.08 under Gini while any within-column threshold has less,
            // so the greedy learner recovers the grid from samples.
            let cells = [
                ((0.25, 0.25), 0usize, 0.35),
                ((0.25, 0.75), 1usize, 0.15),
                ((0.75, 0.25), 1usize, 0.35),
                ((0.75, 0.75), 0usize, 0.15),
            ];
            let mut rows = Vec::with_capacity(n);
            let mut labels = Vec::with_capacity(n);
            for _ in 0..n {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut cell = cells[3];
                for c in cells {
                    acc += c.2;
                    if u < acc {
                        cell = c;
                        break;
                    }
                }
                let ((cx, cy), y, _) = cell;
                // +/- 0.2 keeps a clean margin around the 0.5 boundaries.
                rows.push(vec![
                    cx + (rng.random::<f64>() - 0.5) * 0.4,
                    cy + (rng.random::<f64>() - 0.5) * 0.4,
                ]);
                labels.push(y);
            }
            for k in 0..2 {
                if !labels.contains(&k) {
                    let ((cx, cy), y, _) = cells[k];
                    rows.push(vec![cx, cy]);
                    labels.push(y);
                }
            }
            let names = vec!["even".into(), "odd".into()];
            Dataset::new_classification(rows, labels, 2, names)
        }
        SynthScheme::RegressionClusters => {
            let centers = [(0.0, 1.0), (3.0, 4.0), (6.0, 9.0)];
            let mut rows = Vec::with_capacity(n);
            let mut targets = Vec::with_capacity(n);
            for _ in 0..n {
                let k = rng.random_range(0..3usize);
                let (cx, base) = centers[k];
                rows.push(vec![cx + 0.4 * gaussian(rng)]);
                targets.push((base + 0.25 * gaussian(rng)).max(0.0));
            }
            Dataset::new_regression(rows, targets)
        }
    }
}

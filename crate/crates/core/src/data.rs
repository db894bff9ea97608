//! Datasets and the sampling machinery that feeds learners.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    Classification,
    Regression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Labels {
    /// Dense class ids in `0..n_classes`.
    Classes {
        ids: Vec<usize>,
        n_classes: usize,
    },
    Targets(Vec<f64>),
}

impl Labels {
    pub fn len(&self) -> usize {
        match self {
            Labels::Classes { ids, .. } => ids.len(),
            Labels::Targets(t) => t.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> LabelKind {
        match self {
            Labels::Classes { .. } => LabelKind::Classification,
            Labels::Targets(_) => LabelKind::Regression,
        }
    }
}

/// Dense, row-major labelled point collection.
///
/// For classification data the original label strings are kept in
/// `class_names` (indexed by dense id) so results can be reported in the
/// input's own vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    n_features: usize,
    values: Vec<f64>,
    labels: Labels,
    class_names: Vec<String>,
}

impl Dataset {
    pub fn new(values: Vec<f64>, n_features: usize, labels: Labels) -> Result<Self> {
        if n_features == 0 {
            return Err(Error::invalid("dataset needs at least one feature"));
        }
        if !values.len().is_multiple_of(n_features) {
            return Err(Error::DimensionMismatch {
                expected: (values.len() / n_features + 1) * n_features,
                found: values.len(),
            });
        }
        let n_points = values.len() / n_features;
        if n_points == 0 {
            return Err(Error::EmptyInput);
        }
        if labels.len() != n_points {
            return Err(Error::DimensionMismatch {
                expected: n_points,
                found: labels.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature values"));
        }
        let class_names = match &labels {
            Labels::Classes { ids, n_classes } => {
                if let Some(&bad) = ids.iter().find(|&&c| c >= *n_classes) {
                    return Err(Error::InvalidLabel {
                        label: bad as f64,
                        context: "class id outside 0..n_classes",
                    });
                }
                (0..*n_classes).map(|c| c.to_string()).collect()
            }
            Labels::Targets(t) => {
                if t.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("regression targets"));
                }
                Vec::new()
            }
        };
        Ok(Self {
            n_features,
            values,
            labels,
            class_names,
        })
    }

    /// Classification dataset with `n_classes = max id + 1`.
    pub fn from_classes(values: Vec<f64>, n_features: usize, ids: Vec<usize>) -> Result<Self> {
        let n_classes = ids.iter().max().map_or(0, |m| m + 1);
        Self::new(values, n_features, Labels::Classes { ids, n_classes })
    }

    pub fn with_class_names(mut self, names: Vec<String>) -> Result<Self> {
        match self.labels {
            Labels::Classes { n_classes, .. } if names.len() == n_classes => {
                self.class_names = names;
                Ok(self)
            }
            Labels::Classes { n_classes, .. } => Err(Error::DimensionMismatch {
                expected: n_classes,
                found: names.len(),
            }),
            Labels::Targets(_) => Err(Error::invalid("regression data has no class names")),
        }
    }

    pub fn n_points(&self) -> usize {
        self.values.len() / self.n_features
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    pub fn label_kind(&self) -> LabelKind {
        self.labels.kind()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn n_classes(&self) -> usize {
        match &self.labels {
            Labels::Classes { n_classes, .. } => *n_classes,
            Labels::Targets(_) => 0,
        }
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_features..(i + 1) * self.n_features]
    }

    /// Class id of point `i`; panics on regression data.
    #[inline]
    pub fn class(&self, i: usize) -> usize {
        match &self.labels {
            Labels::Classes { ids, .. } => ids[i],
            Labels::Targets(_) => panic!("class() called on regression dataset"),
        }
    }

    pub fn class_ids(&self) -> Option<&[usize]> {
        match &self.labels {
            Labels::Classes { ids, .. } => Some(ids),
            Labels::Targets(_) => None,
        }
    }

    /// Label as a float: the class id for classification data.
    #[inline]
    pub fn target(&self, i: usize) -> f64 {
        match &self.labels {
            Labels::Classes { ids, .. } => ids[i] as f64,
            Labels::Targets(t) => t[i],
        }
    }

    pub fn require_classification(&self) -> Result<&[usize]> {
        self.class_ids()
            .ok_or_else(|| Error::invalid("classification labels required"))
    }

    /// Copy of the selected points, in the given order (duplicates allowed).
    /// The class vocabulary is preserved even if some classes are absent.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut values = Vec::with_capacity(indices.len() * self.n_features);
        for &i in indices {
            if i >= self.n_points() {
                return Err(Error::invalid(format!("point index {i} out of range")));
            }
            values.extend_from_slice(self.point(i));
        }
        let labels = match &self.labels {
            Labels::Classes { ids, n_classes } => Labels::Classes {
                ids: indices.iter().map(|&i| ids[i]).collect(),
                n_classes: *n_classes,
            },
            Labels::Targets(t) => Labels::Targets(indices.iter().map(|&i| t[i]).collect()),
        };
        Ok(Self {
            n_features: self.n_features,
            values,
            labels,
            class_names: self.class_names.clone(),
        })
    }

    /// Splits into (train, test) by a seeded random permutation.
    pub fn split(&self, test_fraction: f64, seed: u64) -> Result<(Self, Self)> {
        if !(0.0..1.0).contains(&test_fraction) {
            return Err(Error::invalid("test fraction must lie in [0, 1)"));
        }
        let mut order: Vec<usize> = (0..self.n_points()).collect();
        order.shuffle(&mut rng::from_seed(seed));
        let n_test = ((self.n_points() as f64) * test_fraction).round() as usize;
        let n_test = n_test.clamp(1, self.n_points() - 1);
        let (test, train) = order.split_at(n_test);
        Ok((self.subset(train)?, self.subset(test)?))
    }

    /// Writes the dataset as CSV: features first, label last, with a header.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (0..self.n_features).map(|j| format!("x{j}")).collect();
        header.push("label".into());
        w.write_record(&header)?;
        let mut row = Vec::with_capacity(self.n_features + 1);
        for i in 0..self.n_points() {
            row.clear();
            row.extend(self.point(i).iter().map(|v| format!("{v:?}")));
            row.push(match &self.labels {
                Labels::Classes { ids, .. } => self.class_names[ids[i]].clone(),
                Labels::Targets(t) => format!("{:?}", t[i]),
            });
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Reads a comma-separated file.
///
/// `label_column` selects the label; every other column is a feature.
/// Class labels are re-encoded to dense ids in order of first appearance.
/// Row and column numbers in errors are 1-based line numbers of the input.
/// Lines starting with `#` are comments.
pub fn load_csv(
    path: impl AsRef<Path>,
    label_column: usize,
    label_kind: LabelKind,
    has_header: bool,
) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&bytes, label_column, label_kind, has_header)
}

pub fn parse_csv(input: &[u8], label_column: usize, label_kind: LabelKind, has_header: bool) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(input);

    let mut width = None;
    let mut values = Vec::new();
    let mut raw_labels = Vec::new();
    let mut label_rows = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row = record.position().map_or(r + 1, |p| p.line() as usize);
        if has_header && r == 0 {
            width = Some(record.len());
            continue;
        }
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(Error::RaggedRow {
                row,
                expected,
                found: record.len(),
            });
        }
        if label_column >= expected {
            return Err(Error::invalid(format!(
                "label column {label_column} out of range for {expected} columns"
            )));
        }
        for (c, cell) in record.iter().enumerate() {
            if c == label_column {
                raw_labels.push(cell.to_string());
                label_rows.push(row);
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::ParseCell {
                row,
                column: c + 1,
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::ParseCell {
                    row,
                    column: c + 1,
                    value: cell.to_string(),
                });
            }
            values.push(v);
        }
    }
    if raw_labels.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n_features = width.unwrap_or(0).saturating_sub(1);
    if n_features == 0 {
        return Err(Error::invalid("CSV needs at least one feature column"));
    }

    match label_kind {
        LabelKind::Classification => {
            let mut index: HashMap<String, usize> = HashMap::new();
            let mut names = Vec::new();
            let ids = raw_labels
                .into_iter()
                .map(|s| {
                    *index.entry(s.clone()).or_insert_with(|| {
                        names.push(s);
                        names.len() - 1
                    })
                })
                .collect();
            let n_classes = names.len();
            Dataset::new(values, n_features, Labels::Classes { ids, n_classes })?.with_class_names(names)
        }
        LabelKind::Regression => {
            let mut targets = Vec::with_capacity(raw_labels.len());
            for (r, s) in raw_labels.iter().enumerate() {
                let v: f64 = s.parse().map_err(|_| Error::ParseCell {
                    row: label_rows[r],
                    column: label_column + 1,
                    value: s.clone(),
                })?;
                targets.push(v);
            }
            Dataset::new(values, n_features, Labels::Targets(targets))
        }
    }
}

/// Isotropic Gaussian blobs, one per class. Point `i` belongs to class
/// `i % n_classes`.
pub fn generate_blobs(
    n_per_class: usize,
    n_classes: usize,
    n_features: usize,
    centers: &[Vec<f64>],
    sigma: f64,
    seed: u64,
) -> Result<Dataset> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    if n_per_class == 0 || n_classes == 0 || n_features == 0 {
        return Err(Error::invalid("blob counts and dimensions must be positive"));
    }
    if centers.len() != n_classes {
        return Err(Error::invalid(format!(
            "{} centers given for {n_classes} classes",
            centers.len()
        )));
    }
    if let Some(c) = centers.iter().find(|c| c.len() != n_features) {
        return Err(Error::DimensionMismatch {
            expected: n_features,
            found: c.len(),
        });
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = rng::from_seed(seed);
    let n = n_per_class * n_classes;
    let mut values = Vec::with_capacity(n * n_features);
    let mut ids = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % n_classes;
        values.extend(centers[c].iter().map(|m| m + normal.sample(&mut rng)));
        ids.push(c);
    }
    Dataset::new(values, n_features, Labels::Classes { ids, n_classes })
}

/// Cross-validation fold assignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPartition {
    k: usize,
    assignment: Vec<usize>,
}

impl FoldPartition {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn fold_of(&self, point: usize) -> usize {
        self.assignment[point]
    }

    /// Members of fold `f` in ascending point order.
    pub fn fold(&self, f: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == f)
            .collect()
    }

    /// Every point outside fold `f`, ascending.
    pub fn complement(&self, f: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] != f)
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Uniform, unstratified assignment: a seeded permutation dealt round-robin.
pub fn partition_folds(n_points: usize, k: usize, seed: u64) -> Result<FoldPartition> {
    if k < 2 || k > n_points {
        return Err(Error::invalid(format!(
            "fold count {k} must satisfy 2 <= k <= n_points ({n_points})"
        )));
    }
    let mut order: Vec<usize> = (0..n_points).collect();
    order.shuffle(&mut rng::from_seed(seed));
    let mut assignment = vec![0; n_points];
    for (pos, &i) in order.iter().enumerate() {
        assignment[i] = pos % k;
    }
    Ok(FoldPartition { k, assignment })
}

/// `n_points` draws with replacement from `0..n_points`.
pub fn bootstrap_indices(n_points: usize, seed: u64) -> Result<Vec<usize>> {
    if n_points == 0 {
        return Err(Error::EmptyInput);
    }
    let mut rng = rng::from_seed(seed);
    Ok((0..n_points).map(|_| rng.random_range(0..n_points)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShuffleMode {
    /// Fresh permutation at the start of every epoch.
    #[default]
    PerEpochShuffle,
    /// Natural point order every epoch; used for reuse-distance analysis.
    FixedOrder,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub epoch: usize,
    pub indices: Vec<usize>,
}

/// Single-consumer iterator over the mini-batches of several epochs.
/// The final batch of an epoch is shorter when the batch size does not
/// divide the point count.
#[derive(Debug)]
pub struct BatchStream {
    n_points: usize,
    batch_size: usize,
    epochs: usize,
    mode: ShuffleMode,
    rng: rng::Rng,
    order: Vec<usize>,
    epoch: usize,
    cursor: usize,
}

impl BatchStream {
    pub fn new(n_points: usize, batch_size: usize, epochs: usize, mode: ShuffleMode, seed: u64) -> Result<Self> {
        if batch_size == 0 || batch_size > n_points {
            return Err(Error::invalid(format!(
                "batch size {batch_size} must satisfy 1 <= n <= {n_points}"
            )));
        }
        let mut stream = Self {
            n_points,
            batch_size,
            epochs,
            mode,
            rng: rng::from_seed(seed),
            order: (0..n_points).collect(),
            epoch: 0,
            cursor: 0,
        };
        stream.reorder();
        Ok(stream)
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.n_points.div_ceil(self.batch_size)
    }

    fn reorder(&mut self) {
        if self.mode == ShuffleMode::PerEpochShuffle {
            // reshuffle from the previous order so each epoch consumes fresh randomness
            self.order.shuffle(&mut self.rng);
        }
    }
}

impl Iterator for BatchStream {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.epoch >= self.epochs {
            return None;
        }
        let end = (self.cursor + self.batch_size).min(self.n_points);
        let batch = Batch {
            epoch: self.epoch,
            indices: self.order[self.cursor..end].to_vec(),
        };
        self.cursor = end;
        if self.cursor == self.n_points {
            self.cursor = 0;
            self.epoch += 1;
            if self.epoch < self.epochs {
                self.reorder();
            }
        }
        Some(batch)
    }
}

pub fn stream_minibatches(dataset: &Dataset, batch_size: usize, epochs: usize, seed: u64) -> Result<BatchStream> {
    BatchStream::new(
        dataset.n_points(),
        batch_size,
        epochs,
        ShuffleMode::PerEpochShuffle,
        seed,
    )
}

//! Dataset loading, validation, partitioning, splitting, and synthesis.
//!
//! The on-disk format is a CSV file (`id, <features...>, obsolete, label`)
//! plus a JSON sidecar schema that names the role columns, the class names,
//! and each feature's kind. Binary features must hold only {0,1} until they
//! are normalized by the preprocessing stage.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// How a feature column behaves numerically.
///
/// Only `binary` columns are touched by normalization; `ordinal` columns are
/// treated like `continuous` ones everywhere downstream but the distinction
/// is kept for schema documentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Binary,
    Continuous,
    Ordinal,
}

/// Name and kind of one feature column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDescriptor {
    pub name: String,
    pub kind: FeatureKind,
}

impl FeatureDescriptor {
    pub fn new(name: impl Into<String>, kind: FeatureKind) -> Self {
        FeatureDescriptor { name: name.into(), kind }
    }
}

fn default_id_column() -> String {
    "id".into()
}

fn default_obsolete_column() -> String {
    "obsolete".into()
}

fn default_label_column() -> String {
    "label".into()
}

/// Sidecar schema: column roles, class vocabulary, feature kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSchema {
    #[serde(default = "default_id_column")]
    pub id_column: String,
    #[serde(default = "default_obsolete_column")]
    pub obsolete_column: String,
    #[serde(default = "default_label_column")]
    pub label_column: String,
    pub classes: Vec<String>,
    pub features: Vec<FeatureDescriptor>,
}

impl DatasetSchema {
    fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(Error::SchemaMismatch("schema declares no feature columns".into()));
        }
        if self.classes.is_empty() {
            return Err(Error::SchemaMismatch("schema declares no classes".into()));
        }
        let mut names: Vec<&str> = self.features.iter().map(|f| f.name.as_str()).collect();
        names.push(&self.id_column);
        names.push(&self.obsolete_column);
        names.push(&self.label_column);
        for (i, a) in names.iter().enumerate() {
            if names[i + 1..].contains(a) {
                return Err(Error::SchemaMismatch(format!("duplicate column name {a:?}")));
            }
        }
        let mut classes = self.classes.clone();
        classes.sort();
        classes.dedup();
        if classes.len() != self.classes.len() {
            return Err(Error::SchemaMismatch("duplicate class name".into()));
        }
        Ok(())
    }
}

/// A labeled instance matrix with obsolete/non-obsolete flags.
///
/// Labels are 0-based indices into `class_names`. The struct is immutable
/// after construction; downstream stages derive new datasets instead of
/// mutating in place.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<FeatureDescriptor>,
    pub class_names: Vec<String>,
    pub ids: Vec<String>,
    pub x: Matrix,
    pub labels: Vec<usize>,
    pub obsolete: Vec<bool>,
}

/// A borrowed row subset of a dataset.
#[derive(Debug, Clone)]
pub struct DatasetView<'a> {
    pub source: &'a Dataset,
    pub indices: Vec<usize>,
}

impl DatasetView<'_> {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Copy the viewed rows into an owned dataset.
    pub fn materialize(&self) -> Dataset {
        let src = self.source;
        let d = src.n_features();
        let mut x = Matrix::zeros(self.indices.len(), d);
        for (out_i, &i) in self.indices.iter().enumerate() {
            x.row_mut(out_i).copy_from_slice(src.x.row(i));
        }
        Dataset {
            features: src.features.clone(),
            class_names: src.class_names.clone(),
            ids: self.indices.iter().map(|&i| src.ids[i].clone()).collect(),
            x,
            labels: self.indices.iter().map(|&i| src.labels[i]).collect(),
            obsolete: self.indices.iter().map(|&i| src.obsolete[i]).collect(),
        }
    }
}

impl Dataset {
    pub fn n_rows(&self) -> usize {
        self.x.rows()
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    /// Copy of feature column `j`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.x.col(j)
    }

    /// Structural validity: consistent lengths, labels in range, binary
    /// columns holding only {0,1}, finite values, unique feature names.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_rows();
        if n == 0 {
            return Err(Error::EmptyDataset("dataset has no rows".into()));
        }
        if self.ids.len() != n || self.labels.len() != n || self.obsolete.len() != n {
            return Err(Error::SchemaMismatch(format!(
                "row bookkeeping out of sync: {} rows, {} ids, {} labels, {} flags",
                n,
                self.ids.len(),
                self.labels.len(),
                self.obsolete.len()
            )));
        }
        if self.x.cols() != self.features.len() {
            return Err(Error::SchemaMismatch(format!(
                "matrix has {} columns but {} feature descriptors",
                self.x.cols(),
                self.features.len()
            )));
        }
        for (i, f) in self.features.iter().enumerate() {
            if self.features[i + 1..].iter().any(|g| g.name == f.name) {
                return Err(Error::SchemaMismatch(format!("duplicate feature name {:?}", f.name)));
            }
        }
        for (row, &label) in self.labels.iter().enumerate() {
            if label >= self.class_names.len() {
                return Err(Error::SchemaMismatch(format!(
                    "label index {label} out of range at row {}",
                    row + 1
                )));
            }
        }
        for (j, f) in self.features.iter().enumerate() {
            for i in 0..n {
                let v = self.x[(i, j)];
                if !v.is_finite() {
                    return Err(Error::NonNumericCell {
                        column: f.name.clone(),
                        row: i + 1,
                        value: v.to_string(),
                    });
                }
                if f.kind == FeatureKind::Binary && v != 0.0 && v != 1.0 {
                    return Err(Error::BinaryOutOfRange { column: f.name.clone(), row: i + 1, value: v });
                }
            }
        }
        Ok(())
    }

    /// Split into (obsolete, non-obsolete) views. Either side may be empty.
    pub fn partition(&self) -> (DatasetView<'_>, DatasetView<'_>) {
        let mut obs = Vec::new();
        let mut non = Vec::new();
        for (i, &flag) in self.obsolete.iter().enumerate() {
            if flag {
                obs.push(i);
            } else {
                non.push(i);
            }
        }
        (
            DatasetView { source: self, indices: obs },
            DatasetView { source: self, indices: non },
        )
    }

    /// Seeded random split into disjoint (train, test) views with exactly
    /// `test_count` test rows. Indices within each side are ascending so the
    /// result depends only on the chosen membership, not the draw order.
    pub fn shuffle_split(&self, test_count: usize, seed: u64) -> Result<(DatasetView<'_>, DatasetView<'_>)> {
        let n = self.n_rows();
        if test_count == 0 || test_count >= n {
            return Err(Error::TestCountOutOfRange { test_count, n });
        }
        let mut perm: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        perm.shuffle(&mut rng);
        let mut test: Vec<usize> = perm[..test_count].to_vec();
        let mut train: Vec<usize> = perm[test_count..].to_vec();
        test.sort_unstable();
        train.sort_unstable();
        Ok((
            DatasetView { source: self, indices: train },
            DatasetView { source: self, indices: test },
        ))
    }

    /// New dataset keeping only the feature columns listed in `keep`
    /// (indices into the current feature order, ascending or not).
    pub fn select_features(&self, keep: &[usize]) -> Result<Dataset> {
        let d = self.n_features();
        for &j in keep {
            if j >= d {
                return Err(Error::DimensionMismatch { expected: d, got: j });
            }
        }
        let n = self.n_rows();
        let mut x = Matrix::zeros(n, keep.len());
        for i in 0..n {
            for (out_j, &j) in keep.iter().enumerate() {
                x[(i, out_j)] = self.x[(i, j)];
            }
        }
        Ok(Dataset {
            features: keep.iter().map(|&j| self.features[j].clone()).collect(),
            class_names: self.class_names.clone(),
            ids: self.ids.clone(),
            x,
            labels: self.labels.clone(),
            obsolete: self.obsolete.clone(),
        })
    }

    /// Drop zero-variance feature columns; returns the reduced dataset and
    /// the names of everything dropped. Meant as an explicit preflight for
    /// data with constant columns, which the correlation stage rejects.
    pub fn drop_constant_columns(&self) -> Result<(Dataset, Vec<String>)> {
        let n = self.n_rows();
        let mut keep = Vec::new();
        let mut dropped = Vec::new();
        for j in 0..self.n_features() {
            let first = self.x[(0, j)];
            if (0..n).any(|i| self.x[(i, j)] != first) {
                keep.push(j);
            } else {
                dropped.push(self.features[j].name.clone());
            }
        }
        if keep.is_empty() {
            return Err(Error::EmptyDataset("every feature column is constant".into()));
        }
        Ok((self.select_features(&keep)?, dropped))
    }

    /// Write the dataset as CSV (`id, <features>, obsolete, label`).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Csv { path: path.into(), source: e })?;
        let mut header = vec!["id".to_string()];
        header.extend(self.features.iter().map(|f| f.name.clone()));
        header.push("obsolete".into());
        header.push("label".into());
        w.write_record(&header).map_err(|e| Error::Csv { path: path.into(), source: e })?;
        for i in 0..self.n_rows() {
            let mut rec = vec![self.ids[i].clone()];
            rec.extend(self.x.row(i).iter().map(|v| format!("{v}")));
            rec.push(if self.obsolete[i] { "1" } else { "0" }.into());
            rec.push(self.class_names[self.labels[i]].clone());
            w.write_record(&rec).map_err(|e| Error::Csv { path: path.into(), source: e })?;
        }
        w.flush().map_err(|e| Error::Io { path: path.into(), source: e })?;
        Ok(())
    }

    /// Schema describing this dataset, suitable for the JSON sidecar.
    pub fn schema(&self) -> DatasetSchema {
        DatasetSchema {
            id_column: default_id_column(),
            obsolete_column: default_obsolete_column(),
            label_column: default_label_column(),
            classes: self.class_names.clone(),
            features: self.features.clone(),
        }
    }

    /// Write the JSON sidecar schema.
    pub fn write_schema(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.schema())
            .map_err(|e| Error::Json { path: path.into(), source: e })?;
        std::fs::write(path, text + "\n").map_err(|e| Error::Io { path: path.into(), source: e })
    }
}

/// Read a schema JSON file.
pub fn load_schema(path: &Path) -> Result<DatasetSchema> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
    let schema: DatasetSchema =
        serde_json::from_str(&text).map_err(|e| Error::Json { path: path.into(), source: e })?;
    schema.validate()?;
    Ok(schema)
}

/// Load and validate a dataset CSV against its schema.
///
/// Row order is preserved from the file. Every cell is checked: features
/// must parse as finite numbers (binary ones as exactly 0 or 1), the
/// obsolete flag must be 0/1, and labels must be known class names.
pub fn load_dataset(path: &Path, schema: &DatasetSchema) -> Result<Dataset> {
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::Io {
                path: path.into(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, e.to_string()),
            },
            _ => Error::Csv { path: path.into(), source: e },
        })?;

    let headers = reader
        .headers()
        .map_err(|e| Error::Csv { path: path.into(), source: e })?
        .clone();
    let position = |name: &str| -> Option<usize> { headers.iter().position(|h| h == name) };
    let id_col = position(&schema.id_column)
        .ok_or_else(|| Error::SchemaMismatch(format!("missing column {:?}", schema.id_column)))?;
    let obsolete_col = position(&schema.obsolete_column)
        .ok_or_else(|| Error::SchemaMismatch(format!("missing column {:?}", schema.obsolete_column)))?;
    let label_col = position(&schema.label_column)
        .ok_or_else(|| Error::SchemaMismatch(format!("missing column {:?}", schema.label_column)))?;
    let feature_cols: Vec<usize> = schema
        .features
        .iter()
        .map(|f| {
            position(&f.name).ok_or_else(|| Error::SchemaMismatch(format!("missing column {:?}", f.name)))
        })
        .collect::<Result<_>>()?;
    for h in headers.iter() {
        let known = h == schema.id_column
            || h == schema.obsolete_column
            || h == schema.label_column
            || schema.features.iter().any(|f| f.name == h);
        if !known {
            return Err(Error::SchemaMismatch(format!("unexpected column {h:?}")));
        }
    }
    if headers.len() != schema.features.len() + 3 {
        return Err(Error::SchemaMismatch("duplicate header columns".into()));
    }

    let mut ids = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    let mut labels = Vec::new();
    let mut obsolete = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 1;
        let record = record.map_err(|e| Error::Csv { path: path.into(), source: e })?;

        let id = record.get(id_col).unwrap_or("");
        if id.is_empty() {
            return Err(Error::MissingCell { column: schema.id_column.clone(), row });
        }
        ids.push(id.to_string());

        for (f, &col) in schema.features.iter().zip(&feature_cols) {
            let cell = record.get(col).unwrap_or("");
            if cell.is_empty() {
                return Err(Error::MissingCell { column: f.name.clone(), row });
            }
            let v: f64 = cell.parse().map_err(|_| Error::NonNumericCell {
                column: f.name.clone(),
                row,
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonNumericCell { column: f.name.clone(), row, value: cell.to_string() });
            }
            if f.kind == FeatureKind::Binary && v != 0.0 && v != 1.0 {
                return Err(Error::BinaryOutOfRange { column: f.name.clone(), row, value: v });
            }
            values.push(v);
        }

        match record.get(obsolete_col).unwrap_or("") {
            "1" => obsolete.push(true),
            "0" => obsolete.push(false),
            other => {
                return Err(Error::SchemaMismatch(format!(
                    "obsolete flag must be 0 or 1, got {other:?} at row {row}"
                )))
            }
        }

        let label = record.get(label_col).unwrap_or("");
        match schema.classes.iter().position(|c| c == label) {
            Some(k) => labels.push(k),
            None => return Err(Error::UnknownClassName { name: label.to_string(), row }),
        }
    }

    if ids.is_empty() {
        return Err(Error::EmptyDataset(format!("{} has a header but no data rows", path.display())));
    }
    let n = ids.len();
    let ds = Dataset {
        features: schema.features.clone(),
        class_names: schema.classes.clone(),
        ids,
        x: Matrix::from_vec(n, schema.features.len(), values)?,
        labels,
        obsolete,
    };
    ds.validate()?;
    Ok(ds)
}

/// Recipe for a synthetic dataset with a controlled shape: exact per-class
/// counts, a mix of binary and continuous features, and designated
/// redundant columns built to hit exact empirical correlations with their
/// source columns (so the elimination stage has known targets).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisSpec {
    /// Number of obsolete rows.
    pub o: usize,
    /// Number of non-obsolete rows.
    pub u: usize,
    /// Rows per class; must sum to `o + u`.
    pub class_counts: Vec<usize>,
    pub n_binary: usize,
    pub n_continuous: usize,
    /// (source column index, target Pearson r). Each pair appends one
    /// redundant column; the redundant columns occupy the last
    /// `redundant_pairs.len()` continuous slots.
    #[serde(default)]
    pub redundant_pairs: Vec<(usize, f64)>,
    /// Scale of the class-dependent signal in informative continuous
    /// columns, in units of the noise standard deviation (0 = pure noise).
    pub informative_strength: f64,
    #[serde(default)]
    pub seed: u64,
    /// Optional explicit feature names (length `n_binary + n_continuous`).
    #[serde(default)]
    pub feature_names: Option<Vec<String>>,
    /// Optional explicit class names (length `class_counts.len()`).
    #[serde(default)]
    pub class_names: Option<Vec<String>>,
}

impl SynthesisSpec {
    fn validate(&self) -> Result<()> {
        let n = self.o + self.u;
        let sum: usize = self.class_counts.iter().sum();
        if sum != n {
            return Err(Error::ClassCountMismatch { expected: n, got: sum });
        }
        if n < 2 {
            return Err(Error::InvalidSpec("need at least 2 rows (o + u >= 2)".into()));
        }
        if self.class_counts.is_empty() {
            return Err(Error::InvalidSpec("class_counts is empty".into()));
        }
        let d = self.n_binary + self.n_continuous;
        if d == 0 {
            return Err(Error::InvalidSpec("no feature columns requested".into()));
        }
        if self.redundant_pairs.len() > self.n_continuous {
            return Err(Error::InvalidSpec(format!(
                "{} redundant_pairs but only {} continuous columns",
                self.redundant_pairs.len(),
                self.n_continuous
            )));
        }
        let first_target = d - self.redundant_pairs.len();
        for &(src, r) in &self.redundant_pairs {
            if !(-1.0..=1.0).contains(&r) {
                return Err(Error::InvalidSpec(format!(
                    "redundant_pairs target correlation {r} outside [-1, 1]"
                )));
            }
            if src >= d {
                return Err(Error::InvalidSpec(format!(
                    "redundant_pairs source index {src} out of range (D = {d})"
                )));
            }
            if src >= first_target {
                return Err(Error::InvalidSpec(format!(
                    "redundant_pairs source index {src} points at a redundant column"
                )));
            }
        }
        if !(self.informative_strength >= 0.0 && self.informative_strength.is_finite()) {
            return Err(Error::InvalidSpec("informative_strength must be finite and >= 0".into()));
        }
        if let Some(names) = &self.feature_names {
            if names.len() != d {
                return Err(Error::InvalidSpec(format!(
                    "feature_names has {} entries, expected {d}",
                    names.len()
                )));
            }
        }
        if let Some(names) = &self.class_names {
            if names.len() != self.class_counts.len() {
                return Err(Error::InvalidSpec(format!(
                    "class_names has {} entries, expected {}",
                    names.len(),
                    self.class_counts.len()
                )));
            }
        }
        Ok(())
    }
}

/// One standard normal draw (Box–Muller on two uniforms; kept in-repo so
/// the draw sequence is pinned by this code alone).
fn draw_normal(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let u1: f64 = rng.gen();
        let u2: f64 = rng.gen();
        if u1 > f64::MIN_POSITIVE {
            return (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        }
    }
}

fn mean_of(col: &[f64]) -> f64 {
    col.iter().sum::<f64>() / col.len() as f64
}

fn centered(col: &[f64]) -> Vec<f64> {
    let m = mean_of(col);
    col.iter().map(|v| v - m).collect()
}

fn norm_of(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Generate a dataset from a spec. Pure function of the spec (including its
/// seed): identical specs produce bit-identical datasets.
///
/// Construction order (fixed so the random stream is stable):
/// 1. class labels — per-class runs shuffled into place (exact counts);
/// 2. non-obsolete flags — `u` random rows;
/// 3. binary columns — exact popcount from a uniform rate in [0.25, 0.75];
/// 4. class-mean patterns — random vectors made zero-mean and orthonormal
///    under class-count weighting, so informative columns are uncorrelated
///    in population across classes;
/// 5. informative columns — `strength * pattern[class] + N(0,1)`;
/// 6. leftover continuous columns — pure N(0,1) noise;
/// 7. redundant columns — unit-normalized combinations of a source column,
///    a second source, and (only if no second source exists) fresh noise,
///    built so the empirical correlation to the source is exactly the
///    requested target.
pub fn synthesize(spec: &SynthesisSpec) -> Result<Dataset> {
    spec.validate()?;
    let n = spec.o + spec.u;
    let n_classes = spec.class_counts.len();
    let d = spec.n_binary + spec.n_continuous;
    let n_redundant = spec.redundant_pairs.len();
    let plain_slots = spec.n_continuous - n_redundant;
    // Informative columns need class-mean patterns that are zero-mean under
    // the class weights, which caps their count at n_classes - 1.
    let k_dims = plain_slots.min(n_classes.saturating_sub(1));

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // 1. Labels.
    let mut labels = Vec::with_capacity(n);
    for (class, &count) in spec.class_counts.iter().enumerate() {
        labels.extend(std::iter::repeat_n(class, count));
    }
    labels.shuffle(&mut rng);

    // 2. Obsolete flags.
    let mut obsolete = vec![true; n];
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    for &i in order.iter().take(spec.u) {
        obsolete[i] = false;
    }

    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(d);

    // 3. Binary columns with an exact, never-constant count of ones.
    for _ in 0..spec.n_binary {
        let p: f64 = rng.gen_range(0.25..0.75);
        let ones = ((p * n as f64).round() as usize).clamp(1, n - 1);
        let mut col = vec![0.0; n];
        for v in col.iter_mut().take(ones) {
            *v = 1.0;
        }
        col.shuffle(&mut rng);
        columns.push(col);
    }

    // 4. Class-mean patterns, orthonormalized under weights w_c = count_c/n
    //    so that population covariance between informative columns is zero.
    let weights: Vec<f64> = spec.class_counts.iter().map(|&c| c as f64 / n as f64).collect();
    let wdot = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).zip(&weights).map(|((x, y), w)| w * x * y).sum()
    };
    let mut patterns: Vec<Vec<f64>> = Vec::with_capacity(k_dims);
    for _ in 0..k_dims {
        loop {
            let mut v: Vec<f64> = (0..n_classes).map(|_| draw_normal(&mut rng)).collect();
            let wmean: f64 = v.iter().zip(&weights).map(|(x, w)| w * x).sum();
            for x in v.iter_mut() {
                *x -= wmean;
            }
            for p in &patterns {
                let proj = wdot(&v, p);
                for (x, pk) in v.iter_mut().zip(p) {
                    *x -= proj * pk;
                }
            }
            let norm2 = wdot(&v, &v);
            if norm2 > 1e-12 {
                let inv = 1.0 / norm2.sqrt();
                for x in v.iter_mut() {
                    *x *= inv;
                }
                patterns.push(v);
                break;
            }
        }
    }

    // 5. Informative columns.
    for pattern in patterns.iter().take(k_dims) {
        let col: Vec<f64> = labels
            .iter()
            .map(|&c| spec.informative_strength * pattern[c] + draw_normal(&mut rng))
            .collect();
        columns.push(col);
    }

    // 6. Remaining plain continuous columns: pure noise.
    for _ in k_dims..plain_slots {
        columns.push((0..n).map(|_| draw_normal(&mut rng)).collect());
    }

    // 7. Redundant columns. Each is a * u_s + sqrt(1-a^2) * u_t where u_s is
    //    the unit-normalized centered source and u_t is a unit vector
    //    orthogonal to it, so the empirical correlation with the source is
    //    exactly a. The orthogonal part comes from the next distinct source
    //    in the pair list (falling back to another continuous column, then
    //    to fresh noise) — sharing real columns there makes the redundant
    //    copy visibly more correlated with the rest of the data than its
    //    source, which is what backward elimination keys on when choosing
    //    which member of a correlated pair to drop.
    for (k, &(src, target_r)) in spec.redundant_pairs.iter().enumerate() {
        let s_c = centered(&columns[src]);
        let s_norm = norm_of(&s_c);
        if s_norm <= 1e-12 {
            return Err(Error::Numerical(format!(
                "synthesized source column {src} is constant; cannot build a redundant copy"
            )));
        }
        let u_s: Vec<f64> = s_c.iter().map(|v| v / s_norm).collect();

        let second = spec
            .redundant_pairs
            .iter()
            .cycle()
            .skip(k + 1)
            .take(n_redundant)
            .map(|&(other, _)| other)
            .find(|&other| other != src)
            .or_else(|| (spec.n_binary..spec.n_binary + plain_slots).find(|&j| j != src));
        let t_raw: Vec<f64> = match second {
            Some(j) => columns[j].clone(),
            None => (0..n).map(|_| draw_normal(&mut rng)).collect(),
        };
        let u_t = {
            let t_c = centered(&t_raw);
            let proj = dot(&t_c, &u_s);
            let mut t_orth: Vec<f64> = t_c.iter().zip(&u_s).map(|(t, s)| t - proj * s).collect();
            while norm_of(&t_orth) <= 1e-12 {
                // Degenerate second direction (collinear with the source):
                // fall back to fresh noise, re-orthogonalized.
                let f: Vec<f64> = (0..n).map(|_| draw_normal(&mut rng)).collect();
                let f_c = centered(&f);
                let proj = dot(&f_c, &u_s);
                t_orth = f_c.iter().zip(&u_s).map(|(t, s)| t - proj * s).collect();
            }
            let inv = 1.0 / norm_of(&t_orth);
            for v in t_orth.iter_mut() {
                *v *= inv;
            }
            t_orth
        };

        let b = (1.0 - target_r * target_r).max(0.0).sqrt();
        let scale = (n as f64).sqrt();
        let col: Vec<f64> = u_s
            .iter()
            .zip(&u_t)
            .map(|(s, t)| scale * (target_r * s + b * t))
            .collect();
        columns.push(col);
    }

    // Assemble.
    let mut x = Matrix::zeros(n, d);
    for (j, col) in columns.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            x[(i, j)] = v;
        }
    }
    let features: Vec<FeatureDescriptor> = match &spec.feature_names {
        Some(names) => names
            .iter()
            .enumerate()
            .map(|(j, name)| {
                let kind = if j < spec.n_binary { FeatureKind::Binary } else { FeatureKind::Continuous };
                FeatureDescriptor::new(name.clone(), kind)
            })
            .collect(),
        None => {
            let mut f = Vec::with_capacity(d);
            for j in 0..spec.n_binary {
                f.push(FeatureDescriptor::new(format!("b{}", j + 1), FeatureKind::Binary));
            }
            for j in 0..plain_slots {
                f.push(FeatureDescriptor::new(format!("c{}", j + 1), FeatureKind::Continuous));
            }
            for j in 0..n_redundant {
                f.push(FeatureDescriptor::new(format!("red{}", j + 1), FeatureKind::Continuous));
            }
            f
        }
    };
    let class_names = match &spec.class_names {
        Some(names) => names.clone(),
        None => (1..=n_classes).map(|k| format!("class{k}")).collect(),
    };
    let width = n.to_string().len();
    let ids = (1..=n).map(|i| format!("r{i:0width$}")).collect();

    let ds = Dataset { features, class_names, ids, x, labels, obsolete };
    ds.validate()?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn write_temp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    fn tiny_schema() -> DatasetSchema {
        DatasetSchema {
            id_column: "id".into(),
            obsolete_column: "obsolete".into(),
            label_column: "label".into(),
            classes: vec!["keep".into(), "replace".into()],
            features: vec![
                FeatureDescriptor::new("f1", FeatureKind::Binary),
                FeatureDescriptor::new("f2", FeatureKind::Continuous),
                FeatureDescriptor::new("f3", FeatureKind::Continuous),
            ],
        }
    }

    #[test]
    fn loads_minimal_csv() {
        let f = write_temp("id,f1,f2,f3,obsolete,label\na,0,1.5,2,1,keep\nb,1,-0.5,3,0,replace\n");
        let ds = load_dataset(f.path(), &tiny_schema()).unwrap();
        assert_eq!(ds.n_rows(), 2);
        assert_eq!(ds.n_features(), 3);
        assert_eq!(ds.labels, vec![0, 1]);
        assert_eq!(ds.obsolete, vec![true, false]);
        assert_eq!(ds.ids, vec!["a", "b"]);
        assert_eq!(ds.x[(0, 1)], 1.5);
    }

    #[test]
    fn header_only_csv_is_empty_dataset() {
        let f = write_temp("id,f1,f2,f3,obsolete,label\n");
        let err = load_dataset(f.path(), &tiny_schema()).unwrap_err();
        assert!(matches!(err, Error::EmptyDataset(_)), "got {err:?}");
    }

    #[test]
    fn binary_out_of_range_names_column_and_row() {
        let f = write_temp("id,f1,f2,f3,obsolete,label\na,0,1,1,1,keep\nb,2,1,1,1,keep\n");
        match load_dataset(f.path(), &tiny_schema()).unwrap_err() {
            Error::BinaryOutOfRange { column, row, value } => {
                assert_eq!(column, "f1");
                assert_eq!(row, 2);
                assert_eq!(value, 2.0);
            }
            other => panic!("expected BinaryOutOfRange, got {other:?}"),
        }
    }

    #[test]
    fn non_numeric_and_missing_cells_are_rejected() {
        let f = write_temp("id,f1,f2,f3,obsolete,label\na,0,abc,1,1,keep\n");
        assert!(matches!(
            load_dataset(f.path(), &tiny_schema()).unwrap_err(),
            Error::NonNumericCell { .. }
        ));
        let f = write_temp("id,f1,f2,f3,obsolete,label\na,0,,1,1,keep\n");
        assert!(matches!(
            load_dataset(f.path(), &tiny_schema()).unwrap_err(),
            Error::MissingCell { .. }
        ));
    }

    #[test]
    fn unknown_class_name_is_rejected() {
        let f = write_temp("id,f1,f2,f3,obsolete,label\na,0,1,1,1,scrap\n");
        match load_dataset(f.path(), &tiny_schema()).unwrap_err() {
            Error::UnknownClassName { name, row } => {
                assert_eq!(name, "scrap");
                assert_eq!(row, 1);
            }
            other => panic!("expected UnknownClassName, got {other:?}"),
        }
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_dataset(Path::new("/nonexistent/ds.csv"), &tiny_schema()).unwrap_err();
        assert_eq!(err.exit_code(), 4);
    }

    #[test]
    fn partition_splits_by_flag() {
        let f = write_temp(
            "id,f1,f2,f3,obsolete,label\na,0,1,1,1,keep\nb,1,2,2,1,keep\nc,0,3,3,0,replace\n",
        );
        let ds = load_dataset(f.path(), &tiny_schema()).unwrap();
        let (obs, non) = ds.partition();
        assert_eq!((obs.len(), non.len()), (2, 1));
        assert_eq!(non.indices, vec![2]);

        // Re-concatenation covers every row exactly once.
        let mut all: Vec<usize> = obs.indices.iter().chain(&non.indices).copied().collect();
        all.sort_unstable();
        assert_eq!(all, vec![0, 1, 2]);
    }

    #[test]
    fn all_obsolete_partition_has_empty_complement() {
        let f = write_temp("id,f1,f2,f3,obsolete,label\na,0,1,1,1,keep\nb,1,2,2,1,keep\n");
        let ds = load_dataset(f.path(), &tiny_schema()).unwrap();
        let (obs, non) = ds.partition();
        assert_eq!(obs.len(), 2);
        assert!(non.is_empty());
    }

    #[test]
    fn csv_round_trip_preserves_dataset() {
        let spec = SynthesisSpec {
            o: 40,
            u: 5,
            class_counts: vec![20, 25],
            n_binary: 2,
            n_continuous: 3,
            redundant_pairs: vec![(2, 0.9)],
            informative_strength: 2.0,
            seed: 7,
            feature_names: None,
            class_names: None,
        };
        let ds = synthesize(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let csv_path = dir.path().join("ds.csv");
        let schema_path = dir.path().join("schema.json");
        ds.write_csv(&csv_path).unwrap();
        ds.write_schema(&schema_path).unwrap();
        let schema = load_schema(&schema_path).unwrap();
        let back = load_dataset(&csv_path, &schema).unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn class_counts_must_cover_all_rows() {
        // 7+30+28+124+126 = 315, which cannot cover 316 + 10 rows; the
        // generator refuses rather than silently rescaling.
        let spec = SynthesisSpec {
            o: 316,
            u: 10,
            class_counts: vec![7, 30, 28, 124, 126],
            n_binary: 4,
            n_continuous: 12,
            redundant_pairs: vec![],
            informative_strength: 1.0,
            seed: 0,
            feature_names: None,
            class_names: None,
        };
        match synthesize(&spec).unwrap_err() {
            Error::ClassCountMismatch { expected, got } => {
                assert_eq!((expected, got), (326, 315));
            }
            other => panic!("expected ClassCountMismatch, got {other:?}"),
        }
    }

    fn shape_spec(seed: u64) -> SynthesisSpec {
        SynthesisSpec {
            o: 316,
            u: 10,
            class_counts: vec![7, 31, 29, 128, 131],
            n_binary: 4,
            n_continuous: 12,
            redundant_pairs: vec![(4, 0.95), (5, 0.93), (6, 0.91), (7, 0.90)],
            informative_strength: 6.0,
            seed,
            feature_names: None,
            class_names: None,
        }
    }

    #[test]
    fn synthesize_hits_exact_counts() {
        let ds = synthesize(&shape_spec(3)).unwrap();
        assert_eq!(ds.n_rows(), 326);
        assert_eq!(ds.n_features(), 16);
        let (obs, non) = ds.partition();
        assert_eq!((obs.len(), non.len()), (316, 10));
        let mut counts = vec![0usize; 5];
        for &l in &ds.labels {
            counts[l] += 1;
        }
        assert_eq!(counts, vec![7, 31, 29, 128, 131]);
    }

    #[test]
    fn synthesize_is_deterministic() {
        let a = synthesize(&shape_spec(42)).unwrap();
        let b = synthesize(&shape_spec(42)).unwrap();
        assert_eq!(a, b);
        let c = synthesize(&shape_spec(43)).unwrap();
        assert_ne!(a.x, c.x);
    }

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let (ac, bc) = (centered(a), centered(b));
        dot(&ac, &bc) / (norm_of(&ac) * norm_of(&bc))
    }

    #[test]
    fn redundant_column_hits_target_correlation() {
        let spec = SynthesisSpec {
            o: 316,
            u: 10,
            class_counts: vec![163, 163],
            n_binary: 0,
            n_continuous: 3,
            redundant_pairs: vec![(0, 0.9)],
            informative_strength: 1.0,
            seed: 11,
            feature_names: None,
            class_names: None,
        };
        let ds = synthesize(&spec).unwrap();
        let r = pearson(&ds.column(0), &ds.column(2));
        // The construction is exact up to rounding, well inside the ±0.05
        // tolerance the generator promises.
        assert!((r - 0.9).abs() < 1e-9, "r = {r}");
    }

    #[test]
    fn negative_and_unit_targets_are_honored() {
        let spec = SynthesisSpec {
            o: 100,
            u: 0,
            class_counts: vec![50, 50],
            n_binary: 0,
            n_continuous: 4,
            redundant_pairs: vec![(0, -0.8), (1, 1.0)],
            informative_strength: 0.0,
            seed: 5,
            feature_names: None,
            class_names: None,
        };
        let ds = synthesize(&spec).unwrap();
        assert!((pearson(&ds.column(0), &ds.column(2)) + 0.8).abs() < 1e-9);
        assert!((pearson(&ds.column(1), &ds.column(3)) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn impossible_correlation_is_rejected() {
        let mut spec = shape_spec(0);
        spec.redundant_pairs[0].1 = 1.5;
        assert!(matches!(synthesize(&spec).unwrap_err(), Error::InvalidSpec(_)));
    }

    #[test]
    fn shuffle_split_sizes_and_determinism() {
        let ds = synthesize(&shape_spec(1)).unwrap();
        let (train, test) = ds.shuffle_split(21, 99).unwrap();
        assert_eq!((train.len(), test.len()), (305, 21));
        let (train2, test2) = ds.shuffle_split(21, 99).unwrap();
        assert_eq!(train.indices, train2.indices);
        assert_eq!(test.indices, test2.indices);
        let (_, test3) = ds.shuffle_split(21, 100).unwrap();
        assert_ne!(test.indices, test3.indices);
    }

    #[test]
    fn shuffle_split_range_errors() {
        let ds = synthesize(&shape_spec(1)).unwrap();
        assert!(matches!(
            ds.shuffle_split(0, 0).unwrap_err(),
            Error::TestCountOutOfRange { .. }
        ));
        assert!(matches!(
            ds.shuffle_split(326, 0).unwrap_err(),
            Error::TestCountOutOfRange { .. }
        ));
    }

    #[test]
    fn drop_constant_columns_names_dropped() {
        let f = write_temp("id,f1,f2,f3,obsolete,label\na,0,1,5,1,keep\nb,1,2,5,1,keep\n");
        let ds = load_dataset(f.path(), &tiny_schema()).unwrap();
        let (reduced, dropped) = ds.drop_constant_columns().unwrap();
        assert_eq!(reduced.n_features(), 2);
        assert_eq!(dropped, vec!["f3"]);
    }

    proptest! {
        #[test]
        fn split_is_a_disjoint_cover(test_count in 1usize..9, seed in 0u64..500) {
            let ds = synthesize(&SynthesisSpec {
                o: 10,
                u: 0,
                class_counts: vec![5, 5],
                n_binary: 1,
                n_continuous: 2,
                redundant_pairs: vec![],
                informative_strength: 1.0,
                seed: 1,
                feature_names: None,
                class_names: None,
            }).unwrap();
            let (train, test) = ds.shuffle_split(test_count, seed).unwrap();
            prop_assert_eq!(test.len(), test_count);
            let mut all: Vec<usize> = train.indices.iter().chain(&test.indices).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..10).collect::<Vec<_>>());
        }

        #[test]
        fn synthesized_binary_columns_are_binary(seed in 0u64..50) {
            let ds = synthesize(&SynthesisSpec {
                o: 30,
                u: 3,
                class_counts: vec![11, 11, 11],
                n_binary: 3,
                n_continuous: 2,
                redundant_pairs: vec![],
                informative_strength: 2.0,
                seed,
                feature_names: None,
                class_names: None,
            }).unwrap();
            for j in 0..3 {
                let col = ds.column(j);
                prop_assert!(col.iter().all(|&v| v == 0.0 || v == 1.0));
                // Never constant: normalization must stay applicable.
                prop_assert!(col.contains(&0.0) && col.contains(&1.0));
            }
        }
    }
}

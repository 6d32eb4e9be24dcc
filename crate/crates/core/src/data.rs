//! Datasets: synthetic generators, CSV ingestion, splits and minibatching.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::DataError;
use crate::rng::{seeded, PRNG_ID};
use crate::tensor::Tensor;

/// Supervision for each row.
#[derive(Clone, Debug, PartialEq)]
pub enum Targets {
    /// Class index per row.
    Classes(Vec<usize>),
    /// Real-valued targets, shape `(rows, outputs)`.
    Values(Tensor),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes(c) => c.len(),
            Targets::Values(t) => t.rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn select(&self, rows: &[usize]) -> Targets {
        match self {
            Targets::Classes(c) => Targets::Classes(rows.iter().map(|&r| c[r]).collect()),
            Targets::Values(t) => Targets::Values(t.select_rows(rows)),
        }
    }
}

/// Feature matrix with matching targets; the unit a loss is evaluated on.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub features: Tensor,
    pub targets: Targets,
}

impl Batch {
    pub fn new(features: Tensor, targets: Targets) -> Result<Self, DataError> {
        if features.rank() != 2 {
            return Err(DataError::Invalid(format!(
                "features must be a matrix, got shape {:?}",
                features.shape()
            )));
        }
        if features.rows() != targets.len() {
            return Err(DataError::Invalid(format!(
                "{} feature rows but {} targets",
                features.rows(),
                targets.len()
            )));
        }
        Ok(Self { features, targets })
    }

    pub fn rows(&self) -> usize {
        self.features.rows()
    }

    pub fn width(&self) -> usize {
        self.features.cols()
    }

    pub fn select(&self, rows: &[usize]) -> Batch {
        Batch {
            features: self.features.select_rows(rows),
            targets: self.targets.select(rows),
        }
    }
}

/// Where a dataset came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Generator {
        name: String,
        params: serde_json::Value,
        seed: u64,
        prng: String,
    },
    File {
        path: String,
        sha256: String,
    },
    Split {
        parent: Box<Provenance>,
        part: String,
        test_fraction: f64,
        seed: u64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub data: Batch,
    /// Set for classification data; every class label is below it.
    pub num_classes: Option<usize>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(
        data: Batch,
        num_classes: Option<usize>,
        provenance: Provenance,
    ) -> Result<Self, DataError> {
        if let (Targets::Classes(labels), Some(k)) = (&data.targets, num_classes) {
            if let Some((row, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= k) {
                return Err(DataError::Invalid(format!(
                    "label {l} at row {row} is outside [0, {k})"
                )));
            }
        }
        Ok(Self {
            data,
            num_classes,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.data.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn width(&self) -> usize {
        self.data.width()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        match &self.data.targets {
            Targets::Classes(c) => Some(c),
            Targets::Values(_) => None,
        }
    }

    pub fn subset(&self, rows: &[usize], provenance: Provenance) -> Dataset {
        Dataset {
            data: self.data.select(rows),
            num_classes: self.num_classes,
            provenance,
        }
    }
}

fn normal(rng: &mut crate::rng::Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Two interleaved half circles.
///
/// Class 0 lies on the upper unit semicircle `(cos t, sin t)`, class 1 on
/// `(1 - cos t, 0.5 - sin t)`, `t ∈ [0, π]` evenly spaced; isotropic Gaussian
/// noise of standard deviation `noise_sigma` is then added. Class 0 gets the
/// extra point when `n` is odd.
pub fn gen_two_moons(n: usize, noise_sigma: f64, seed: u64) -> Result<Dataset, DataError> {
    if n < 2 {
        return Err(DataError::Invalid(format!("two_moons needs n >= 2, got {n}")));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(DataError::Invalid(format!(
            "noise_sigma must be >= 0, got {noise_sigma}"
        )));
    }
    let n_outer = n.div_ceil(2);
    let n_inner = n - n_outer;
    let angle = |i: usize, m: usize| {
        if m <= 1 {
            0.0
        } else {
            PI * i as f64 / (m - 1) as f64
        }
    };
    let mut rng = seeded(seed);
    let mut features = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n_outer {
        let t = angle(i, n_outer);
        features.extend([t.cos(), t.sin()]);
        labels.push(0);
    }
    for i in 0..n_inner {
        let t = angle(i, n_inner);
        features.extend([1.0 - t.cos(), 0.5 - t.sin()]);
        labels.push(1);
    }
    if noise_sigma > 0.0 {
        for v in &mut features {
            *v += noise_sigma * normal(&mut rng);
        }
    }
    let data = Batch::new(Tensor::new(vec![n, 2], features)?, Targets::Classes(labels))?;
    Dataset::new(
        data,
        Some(2),
        Provenance::Generator {
            name: "two_moons".into(),
            params: serde_json::json!({ "n": n, "noise_sigma": noise_sigma }),
            seed,
            prng: PRNG_ID.into(),
        },
    )
}

/// Isotropic Gaussian blobs; row `i` belongs to class `i % centers.len()`.
pub fn gen_gaussian_blobs(
    n: usize,
    centers: &[Vec<f64>],
    sigma: f64,
    seed: u64,
) -> Result<Dataset, DataError> {
    if n < 2 {
        return Err(DataError::Invalid(format!("blobs needs n >= 2, got {n}")));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(DataError::Invalid(format!("sigma must be >= 0, got {sigma}")));
    }
    let dim = centers.first().map_or(0, Vec::len);
    if dim == 0 || centers.iter().any(|c| c.len() != dim) {
        return Err(DataError::Invalid(
            "centers must be non-empty and share one positive dimension".into(),
        ));
    }
    let k = centers.len();
    let mut rng = seeded(seed);
    let mut features = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % k;
        for &mu in &centers[c] {
            features.push(mu + sigma * normal(&mut rng));
        }
        labels.push(c);
    }
    let data = Batch::new(Tensor::new(vec![n, dim], features)?, Targets::Classes(labels))?;
    Dataset::new(
        data,
        Some(k),
        Provenance::Generator {
            name: "gaussian_blobs".into(),
            params: serde_json::json!({ "n": n, "centers": centers, "sigma": sigma }),
            seed,
            prng: PRNG_ID.into(),
        },
    )
}

/// Seeded train/test partition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    /// Returns `(train, test)`. The test part holds `round(n * test_fraction)`
    /// rows, clamped so both parts are non-empty. Each part keeps the
    /// permuted order.
    pub fn split(&self, ds: &Dataset) -> Result<(Dataset, Dataset), DataError> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(DataError::Invalid(format!(
                "test_fraction must be in (0, 1), got {}",
                self.test_fraction
            )));
        }
        let n = ds.len();
        if n < 2 {
            return Err(DataError::Invalid(format!(
                "cannot split a dataset of {n} rows"
            )));
        }
        let n_test = ((n as f64 * self.test_fraction).round() as usize).clamp(1, n - 1);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut seeded(self.seed));
        let (test_idx, train_idx) = order.split_at(n_test);
        let prov = |part: &str| Provenance::Split {
            parent: Box::new(ds.provenance.clone()),
            part: part.into(),
            test_fraction: self.test_fraction,
            seed: self.seed,
        };
        Ok((
            ds.subset(train_idx, prov("train")),
            ds.subset(test_idx, prov("test")),
        ))
    }
}

/// One epoch of batches of at most `batch_size` rows.
///
/// With `shuffle`, rows are visited in a permutation drawn from `seed`;
/// otherwise in dataset order. Every row appears in exactly one batch.
pub fn minibatches(
    ds: &Dataset,
    batch_size: usize,
    seed: u64,
    shuffle: bool,
) -> Result<Vec<Batch>, DataError> {
    Ok(batch_indices(ds.len(), batch_size, seed, shuffle)?
        .iter()
        .map(|idx| ds.data.select(idx))
        .collect())
}

/// Row indices for each batch of one epoch; see [`minibatches`].
pub fn batch_indices(
    n: usize,
    batch_size: usize,
    seed: u64,
    shuffle: bool,
) -> Result<Vec<Vec<usize>>, DataError> {
    if batch_size == 0 || batch_size > n {
        return Err(DataError::Invalid(format!(
            "batch size must be in [1, {n}], got {batch_size}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    if shuffle {
        order.shuffle(&mut seeded(seed));
    }
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Reads a comma-separated file with a header row.
///
/// Every column except `label_column` becomes a feature, in file order.
/// Labels that are all non-negative integers make a classification dataset
/// with `max + 1` classes; anything else becomes a single real target column.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let bytes = fs::read(path)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(bytes.as_slice());
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| DataError::MissingColumn {
            name: label_column.to_string(),
            available: headers.clone(),
        })?;

    let mut features = Vec::new();
    let mut raw_labels = Vec::new();
    let mut rows = 0;
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(DataError::Cell {
                row,
                column: record.len().min(headers.len()),
                message: format!(
                    "expected {} fields, found {}",
                    headers.len(),
                    record.len()
                ),
            });
        }
        for (column, cell) in record.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| DataError::Cell {
                row,
                column,
                message: format!("`{cell}` in column `{}` is not a number", headers[column]),
            })?;
            if !v.is_finite() {
                return Err(DataError::Cell {
                    row,
                    column,
                    message: format!("non-finite value in column `{}`", headers[column]),
                });
            }
            if column == label_idx {
                raw_labels.push(v);
            } else {
                features.push(v);
            }
        }
        rows += 1;
    }
    let width = headers.len() - 1;
    let integral = raw_labels
        .iter()
        .all(|&v| v >= 0.0 && v.fract() == 0.0 && v < u32::MAX as f64);
    let (targets, num_classes) = if integral && !raw_labels.is_empty() {
        let labels: Vec<usize> = raw_labels.iter().map(|&v| v as usize).collect();
        let k = labels.iter().max().map_or(0, |m| m + 1);
        (Targets::Classes(labels), Some(k))
    } else {
        (
            Targets::Values(Tensor::new(vec![rows, 1], raw_labels)?),
            None,
        )
    };
    let data = Batch::new(Tensor::new(vec![rows, width], features)?, targets)?;
    Dataset::new(
        data,
        num_classes,
        Provenance::File {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        },
    )
}

/// Writes features as `x0, x1, ...` followed by `label_column`, using
/// shortest round-trip float formatting.
pub fn write_csv(
    ds: &Dataset,
    path: impl AsRef<Path>,
    label_column: &str,
) -> Result<(), DataError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..ds.width()).map(|i| format!("x{i}")).collect();
    header.push(label_column.to_string());
    w.write_record(&header)?;
    for r in 0..ds.len() {
        let mut rec: Vec<String> = ds.data.features.row(r).iter().map(|v| v.to_string()).collect();
        match &ds.data.targets {
            Targets::Classes(c) => rec.push(c[r].to_string()),
            Targets::Values(t) => {
                if t.cols() != 1 {
                    return Err(DataError::Invalid(
                        "csv export supports a single target column".into(),
                    ));
                }
                rec.push(t.row(r)[0].to_string());
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

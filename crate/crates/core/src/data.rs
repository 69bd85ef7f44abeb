//! Tabular datasets: ingestion, splitting, and light preprocessing.

use std::fs::File;
use std::path::Path;

use log::warn;
use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Regression,
    BinaryClassification,
}

/// Dense feature matrix with a response vector.
///
/// Values are immutable after construction; use the constructors so the
/// invariants (shape agreement, finite entries, 0/1 labels) are checked.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: Array2<f64>,
    response: Array1<f64>,
    task: Task,
    feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        features: Array2<f64>,
        response: Array1<f64>,
        task: Task,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let (n, p) = features.dim();
        if n == 0 {
            return Err(Error::TooFewRows { needed: 1, got: 0 });
        }
        if p == 0 {
            return Err(Error::InvalidParameter("dataset needs at least one feature".into()));
        }
        if response.len() != n {
            return Err(Error::DimensionMismatch {
                what: "response entries",
                expected: n,
                got: response.len(),
            });
        }
        if feature_names.len() != p {
            return Err(Error::DimensionMismatch {
                what: "feature names",
                expected: p,
                got: feature_names.len(),
            });
        }
        for ((row, col), v) in features.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    row,
                    column: feature_names[col].clone(),
                });
            }
        }
        for (row, &v) in response.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    row,
                    column: "<response>".into(),
                });
            }
            if task == Task::BinaryClassification && v != 0.0 && v != 1.0 {
                return Err(Error::NonBinaryLabel { row, value: v });
            }
        }
        Ok(Self {
            features,
            response,
            task,
            feature_names,
        })
    }

    /// Builds a dataset with generated names `x0, x1, ...`.
    pub fn from_arrays(features: Array2<f64>, response: Array1<f64>, task: Task) -> Result<Self> {
        let names = default_names(features.ncols());
        Self::new(features, response, task, names)
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn response(&self) -> &Array1<f64> {
        &self.response
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    /// New dataset holding the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        Self::new(
            self.features.select(Axis(0), rows),
            self.response.select(Axis(0), rows),
            self.task,
            self.feature_names.clone(),
        )
    }

    /// Same covariates, new response (and possibly a new task).
    pub fn with_response(&self, response: Array1<f64>, task: Task) -> Result<Self> {
        Self::new(self.features.clone(), response, task, self.feature_names.clone())
    }

    /// Same response, new covariates with the same shape.
    pub fn with_features(&self, features: Array2<f64>) -> Result<Self> {
        Self::new(features, self.response.clone(), self.task, self.feature_names.clone())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>, target_column: &str) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        header.push(target_column);
        w.write_record(&header)?;
        for (row, y) in self.features.outer_iter().zip(self.response.iter()) {
            let mut rec: Vec<String> = row.iter().map(|v| format_float(*v)).collect();
            rec.push(format_float(*y));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

pub(crate) fn default_names(p: usize) -> Vec<String> {
    (0..p).map(|k| format!("x{k}")).collect()
}

/// Shortest decimal representation that parses back to the same `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:?}")
}

/// Reads a headered CSV; every non-target column must be numeric.
pub fn load_csv(path: impl AsRef<Path>, target_column: &str, task: Task) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let target = header
        .iter()
        .position(|h| h == target_column)
        .ok_or_else(|| Error::MissingTarget(target_column.to_string()))?;
    let names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != target)
        .map(|(_, h)| h.clone())
        .collect();

    let mut values = Vec::new();
    let mut response = Vec::new();
    let mut n = 0usize;
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != header.len() {
            return Err(Error::DimensionMismatch {
                what: "cells in csv row",
                expected: header.len(),
                got: record.len(),
            });
        }
        for (j, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            let v: f64 = cell.parse().map_err(|_| Error::NonNumeric {
                row,
                column: header[j].clone(),
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    row,
                    column: header[j].clone(),
                });
            }
            if j == target {
                response.push(v);
            } else {
                values.push(v);
            }
        }
        n += 1;
    }
    if n < 2 {
        return Err(Error::TooFewRows { needed: 2, got: n });
    }
    let features = Array2::from_shape_vec((n, names.len()), values)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Dataset::new(features, Array1::from(response), task, names)
}

#[derive(Clone, Debug)]
pub struct SplitPair {
    pub train: Dataset,
    pub test: Dataset,
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
    pub seed: u64,
    pub train_fraction: f64,
}

/// Seeded shuffle, then cut at `floor(n * train_fraction)`.
pub fn train_test_split(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<SplitPair> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let n = ds.n_rows();
    let cut = (n as f64 * train_fraction).floor() as usize;
    if cut == 0 || cut == n {
        return Err(Error::InvalidParameter(format!(
            "train fraction {train_fraction} leaves an empty side for n = {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from_seed(seed));
    let (train_rows, test_rows) = order.split_at(cut);
    Ok(SplitPair {
        train: ds.select_rows(train_rows)?,
        test: ds.select_rows(test_rows)?,
        train_rows: train_rows.to_vec(),
        test_rows: test_rows.to_vec(),
        seed,
        train_fraction,
    })
}

#[derive(Clone, Debug)]
pub struct CorrelationFilter {
    pub dataset: Dataset,
    /// Indices (into the input) of the dropped columns.
    pub dropped: Vec<usize>,
    /// Indices of zero-variance columns that were retained.
    pub zero_variance: Vec<usize>,
}

pub fn pearson(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.sum() / n;
    let mb = b.sum() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b.iter()) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        None
    } else {
        Some(sab / (saa * sbb).sqrt())
    }
}

/// Greedy left-to-right filter: a column is dropped when its absolute
/// correlation with any retained earlier column exceeds `threshold`.
pub fn drop_correlated(ds: &Dataset, threshold: f64) -> Result<CorrelationFilter> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "correlation threshold must lie in (0, 1], got {threshold}"
        )));
    }
    let p = ds.n_features();
    if p < 2 {
        return Err(Error::InvalidParameter("need at least two features".into()));
    }
    let x = ds.features();
    let mut kept: Vec<usize> = Vec::with_capacity(p);
    let mut dropped = Vec::new();
    let mut zero_variance = Vec::new();
    for j in 0..p {
        let col = x.column(j);
        if col.iter().all(|v| *v == col[0]) {
            warn!(
                "{{\"event\":\"zero_variance_column\",\"column\":{j},\"name\":{:?}}}",
                ds.feature_names()[j]
            );
            zero_variance.push(j);
            kept.push(j);
            continue;
        }
        let redundant = kept.iter().any(|&i| {
            pearson(x.column(i), col)
                .map(|r| r.abs() > threshold)
                .unwrap_or(false)
        });
        if redundant {
            dropped.push(j);
        } else {
            kept.push(j);
        }
    }
    let names = kept.iter().map(|&j| ds.feature_names()[j].clone()).collect();
    let dataset = Dataset::new(
        x.select(Axis(1), &kept),
        ds.response().clone(),
        ds.task(),
        names,
    )?;
    Ok(CorrelationFilter {
        dataset,
        dropped,
        zero_variance,
    })
}

pub fn column_means(ds: &Dataset) -> Array1<f64> {
    ds.features()
        .mean_axis(Axis(0))
        .expect("dataset has at least one row")
}

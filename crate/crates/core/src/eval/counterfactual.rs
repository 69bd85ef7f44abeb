use ndarray::{Array1, ArrayView2, Axis};
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize)]
pub struct CounterfactualMatch {
    /// Chosen training row for each test row.
    pub matches: Vec<usize>,
    /// Mean `||x - x_j||_1` over test rows.
    pub mean_l1: f64,
    /// Mean `|x_k - x_{j,k}|` per feature over test rows.
    pub mean_abs_diff: Vec<f64>,
}

/// Nearest opposite-prediction training row in the `train_space` /
/// `test_space` coordinates (ties to the lower row index); distances are
/// then reported in `train_x` / `test_x` units, optionally divided by the
/// training column standard deviation.
#[allow(clippy::too_many_arguments)]
pub fn knn_counterfactual(
    train_space: ArrayView2<f64>,
    train_pred: &[f64],
    train_x: ArrayView2<f64>,
    test_space: ArrayView2<f64>,
    test_pred: &[f64],
    test_x: ArrayView2<f64>,
    standardize: bool,
) -> Result<CounterfactualMatch> {
    let n_train = train_space.nrows();
    let n_test = test_space.nrows();
    for (what, expected, got) in [
        ("training predictions", n_train, train_pred.len()),
        ("training rows", n_train, train_x.nrows()),
        ("test predictions", n_test, test_pred.len()),
        ("test rows", n_test, test_x.nrows()),
        ("matching columns", train_space.ncols(), test_space.ncols()),
        ("feature columns", train_x.ncols(), test_x.ncols()),
    ] {
        if expected != got {
            return Err(Error::DimensionMismatch { what, expected, got });
        }
    }
    let first = train_pred.first().copied();
    if first.is_none() || train_pred.iter().all(|&p| Some(p) == first) {
        return Err(Error::SingleClass);
    }
    let scale: Array1<f64> = if standardize {
        train_x.std_axis(Axis(0), 0.0).mapv(|s| if s > 0.0 { s } else { 1.0 })
    } else {
        Array1::ones(train_x.ncols())
    };
    let p = train_x.ncols();
    let mut matches = Vec::with_capacity(n_test);
    let mut sum_abs = vec![0.0; p];
    let mut sum_l1 = 0.0;
    for (i, w) in test_space.outer_iter().enumerate() {
        let mut best: Option<(f64, usize)> = None;
        for (j, wj) in train_space.outer_iter().enumerate() {
            if train_pred[j] == test_pred[i] {
                continue;
            }
            let d: f64 = w.iter().zip(wj.iter()).map(|(a, b)| (a - b).abs()).sum();
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, j));
            }
        }
        let (_, j) = best.ok_or(Error::SingleClass)?;
        matches.push(j);
        for k in 0..p {
            let d = (test_x[[i, k]] - train_x[[j, k]]).abs() / scale[k];
            sum_abs[k] += d;
            sum_l1 += d;
        }
    }
    let n = n_test.max(1) as f64;
    Ok(CounterfactualMatch {
        matches,
        mean_l1: sum_l1 / n,
        mean_abs_diff: sum_abs.into_iter().map(|s| s / n).collect(),
    })
}

use ndarray::ArrayView2;

use crate::data::{column_means, Dataset, Task};
use crate::error::{Error, Result};
use crate::eval::metrics::auroc;
use crate::forest::{fit_forest, ForestParams};
use crate::glm::GlmConfig;
use crate::importance::{compute_lfi, rank_rows, LfiMatrix, Method};
use crate::linalg::r_squared;

/// Number of features kept per row: `ceil(keep_pct * p)`, at least one.
pub fn top_k_count(keep_pct: f64, p: usize) -> Result<usize> {
    if !(keep_pct > 0.0 && keep_pct <= 1.0) {
        return Err(Error::InvalidParameter(format!("keep_pct must lie in (0, 1], got {keep_pct}")));
    }
    // shave rounding noise so 0.1 * 50 stays 5
    let k = (keep_pct * p as f64 - 1e-9).ceil() as usize;
    Ok(k.clamp(1, p.max(1)))
}

/// Per row, the indices of the `k` largest `|score|`s (ties to lower index).
pub fn top_k_sets(scores: ArrayView2<f64>, k: usize) -> Vec<Vec<usize>> {
    let ranks = rank_rows(scores);
    ranks
        .outer_iter()
        .map(|row| (0..row.len()).filter(|&j| row[j] <= k).collect())
        .collect()
}

/// Overwrites every cell outside a row's top set with the column mean.
pub fn mask_features(ds: &Dataset, lfi: &LfiMatrix, keep_pct: f64) -> Result<Dataset> {
    if lfi.scores.dim() != ds.features().dim() {
        return Err(Error::DimensionMismatch {
            what: "importance rows",
            expected: ds.n_rows(),
            got: lfi.n_rows(),
        });
    }
    let p = ds.n_features();
    let k = top_k_count(keep_pct, p)?;
    if k == p {
        return Ok(ds.clone());
    }
    let means = column_means(ds);
    let mut x = ds.features().clone();
    for (i, keep) in top_k_sets(lfi.scores.view(), k).into_iter().enumerate() {
        let mut kept = vec![false; p];
        for j in keep {
            kept[j] = true;
        }
        for j in (0..p).filter(|&j| !kept[j]) {
            x[[i, j]] = means[j];
        }
    }
    ds.with_features(x)
}

/// Test R^2 (regression) or test AUROC of predicted probability.
pub fn forest_score(train: &Dataset, test: &Dataset, params: &ForestParams, seed: u64) -> Result<f64> {
    let forest = fit_forest(train, params, seed)?;
    let pred = forest.predict(test.features().view())?;
    match train.task() {
        Task::Regression => Ok(r_squared(test.response().view(), pred.as_slice().into(), None)),
        Task::BinaryClassification => {
            let labels: Vec<bool> = test.response().iter().map(|&v| v == 1.0).collect();
            auroc(&pred, &labels)
        }
    }
}

/// Masks the training set by per-row importance, retrains and scores on the
/// untouched test set.
pub fn mask_and_retrain(
    train: &Dataset,
    test: &Dataset,
    lfi_train: &LfiMatrix,
    keep_pct: f64,
    params: &ForestParams,
    seed: u64,
) -> Result<f64> {
    let masked = mask_features(train, lfi_train, keep_pct)?;
    forest_score(&masked, test, params, seed)
}

/// Mean over rows of `|union of top sets across fits| / p`.
pub fn union_fraction(sets: &[Vec<Vec<usize>>], p: usize) -> Result<f64> {
    let n = sets.first().map(|s| s.len()).unwrap_or(0);
    if sets.iter().any(|s| s.len() != n) {
        return Err(Error::InvalidParameter("fits disagree on row count".into()));
    }
    if n == 0 || p == 0 {
        return Err(Error::InvalidParameter("no rows to compare".into()));
    }
    let mut seen = vec![usize::MAX; p];
    let mut total = 0usize;
    for i in 0..n {
        for fit in sets {
            for &j in &fit[i] {
                if seen[j] != i {
                    seen[j] = i;
                    total += 1;
                }
            }
        }
    }
    Ok(total as f64 / (n * p) as f64)
}

/// Refits the forest (and explainer) once per seed on `ds` and measures how
/// many distinct features each row's top set touches.
pub fn stability(
    ds: &Dataset,
    method: Method,
    keep_pct: f64,
    seeds: &[u64],
    params: &ForestParams,
    glm_config: &GlmConfig,
) -> Result<f64> {
    if seeds.len() < 2 {
        return Err(Error::InvalidParameter("stability needs at least two seeds".into()));
    }
    let mut sorted = seeds.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidParameter("duplicate seeds".into()));
    }
    let k = top_k_count(keep_pct, ds.n_features())?;
    let sets = seeds
        .iter()
        .map(|&seed| {
            let forest = fit_forest(ds, params, seed)?;
            let lfi = compute_lfi(method, &forest, ds, ds.features().view(), glm_config)?;
            Ok(top_k_sets(lfi.scores.view(), k))
        })
        .collect::<Result<Vec<_>>>()?;
    union_fraction(&sets, ds.n_features())
}

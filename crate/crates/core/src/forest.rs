//! Bagged random forests with per-tree bootstrap multiplicities.

use ndarray::{ArrayView2, Axis};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Task};
use crate::error::{Error, Result};
use crate::rng::{child_rng, derive_seed};
use crate::tree::{fit_tree_weighted, MaxFeatures, TreeModel, TreeParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
    pub max_depth: Option<usize>,
}

impl ForestParams {
    /// 100 trees, `min_samples_leaf = 5`, a third of the features per node.
    pub fn regression() -> Self {
        Self {
            n_estimators: 100,
            min_samples_leaf: 5,
            max_features: MaxFeatures::Fraction(0.33),
            max_depth: None,
        }
    }

    /// 100 trees, `min_samples_leaf = 1`, `sqrt(p)` features per node.
    pub fn classification() -> Self {
        Self {
            n_estimators: 100,
            min_samples_leaf: 1,
            max_features: MaxFeatures::Sqrt,
            max_depth: None,
        }
    }

    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Regression => Self::regression(),
            Task::BinaryClassification => Self::classification(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    trees: Vec<TreeModel>,
    in_bag_counts: Vec<Vec<u32>>,
    params: ForestParams,
    seed: u64,
    task: Task,
    n: usize,
    p: usize,
}

fn bootstrap(n: usize, rng: &mut crate::rng::Rng) -> Vec<u32> {
    let mut counts = vec![0u32; n];
    for _ in 0..n {
        counts[rng.random_range(0..n)] += 1;
    }
    counts
}

/// Draws a bootstrap per tree and fits each tree on the multiplicity-weighted
/// rows. Tree `t` depends only on `(seed, t)`, never on scheduling.
pub fn fit_forest(ds: &Dataset, params: &ForestParams, seed: u64) -> Result<ForestModel> {
    if params.n_estimators == 0 {
        return Err(Error::InvalidParameter("n_estimators must be >= 1".into()));
    }
    if params.min_samples_leaf == 0 {
        return Err(Error::InvalidParameter("min_samples_leaf must be >= 1".into()));
    }
    let (n, p) = (ds.n_rows(), ds.n_features());
    let fitted: Vec<(TreeModel, Vec<u32>)> = (0..params.n_estimators)
        .into_par_iter()
        .map(|t| {
            let tree_seed = derive_seed(seed, t as u64);
            let counts = bootstrap(n, &mut child_rng(tree_seed, 0));
            let tree_params = TreeParams {
                min_samples_leaf: params.min_samples_leaf,
                max_features: params.max_features,
                max_depth: params.max_depth,
                seed: derive_seed(tree_seed, 1),
            };
            let tree = fit_tree_weighted(
                ds.features().view(),
                ds.response().view(),
                &counts,
                &tree_params,
                ds.task(),
            )?;
            Ok((tree, counts))
        })
        .collect::<Result<_>>()?;
    let (trees, in_bag_counts) = fitted.into_iter().unzip();
    Ok(ForestModel {
        trees,
        in_bag_counts,
        params: params.clone(),
        seed,
        task: ds.task(),
        n,
        p,
    })
}

impl ForestModel {
    /// Assembles a forest from already-fitted trees, e.g. when loading a
    /// bundle or scoring trees produced elsewhere.
    pub fn from_parts(
        trees: Vec<TreeModel>,
        in_bag_counts: Vec<Vec<u32>>,
        params: ForestParams,
        seed: u64,
        task: Task,
        n: usize,
        p: usize,
    ) -> Result<Self> {
        if trees.len() != in_bag_counts.len() {
            return Err(Error::DimensionMismatch {
                what: "multiplicity vectors",
                expected: trees.len(),
                got: in_bag_counts.len(),
            });
        }
        for (tree, counts) in trees.iter().zip(&in_bag_counts) {
            if counts.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "multiplicities",
                    expected: n,
                    got: counts.len(),
                });
            }
            if tree.n_features() != p {
                return Err(Error::DimensionMismatch {
                    what: "tree features",
                    expected: p,
                    got: tree.n_features(),
                });
            }
        }
        Ok(Self {
            trees,
            in_bag_counts,
            params,
            seed,
            task,
            n,
            p,
        })
    }

    pub fn trees(&self) -> &[TreeModel] {
        &self.trees
    }

    pub fn in_bag_counts(&self) -> &[Vec<u32>] {
        &self.in_bag_counts
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn n_train(&self) -> usize {
        self.n
    }

    pub fn n_features(&self) -> usize {
        self.p
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    /// Mean of the per-tree predictions (a probability for classification).
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.p {
            return Err(Error::DimensionMismatch {
                what: "features",
                expected: self.p,
                got: x.ncols(),
            });
        }
        let per_tree: Vec<Vec<f64>> = self
            .trees
            .par_iter()
            .map(|t| t.predict(x))
            .collect::<Result<_>>()?;
        let mut out = vec![0.0; x.len_of(Axis(0))];
        for preds in &per_tree {
            for (o, v) in out.iter_mut().zip(preds) {
                *o += v;
            }
        }
        let t = self.trees.len() as f64;
        out.iter_mut().for_each(|o| *o /= t);
        Ok(out)
    }

    /// Rows left out of tree `t`'s bootstrap.
    pub fn oob_rows(&self, t: usize) -> Result<Vec<usize>> {
        let counts = self.in_bag_counts.get(t).ok_or(Error::OutOfRange {
            index: t,
            len: self.trees.len(),
        })?;
        Ok(counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == 0)
            .map(|(i, _)| i)
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use ndarray::{array, Array1, Array2};
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, p: usize, seed: u64) -> Dataset {
        let mut rng = rng_from_seed(seed);
        let x = Array2::from_shape_fn((n, p), |_| StandardNormal.sample(&mut rng));
        let y = Array1::from_shape_fn(n, |i| x[[i, 0]] + 0.5 * x[[i, 1]]);
        Dataset::from_arrays(x, y, Task::Regression).unwrap()
    }

    #[test]
    fn bootstrap_counts_sum_to_n_and_oob_fraction_is_near_one_over_e() {
        let ds = gaussian(100, 3, 1);
        let params = ForestParams {
            n_estimators: 10,
            ..ForestParams::regression()
        };
        let f = fit_forest(&ds, &params, 42).unwrap();
        let mut oob = 0.0;
        for t in 0..f.n_trees() {
            assert_eq!(f.in_bag_counts()[t].iter().sum::<u32>(), 100);
            oob += f.oob_rows(t).unwrap().len() as f64 / 100.0;
        }
        oob /= f.n_trees() as f64;
        assert!((oob - (-1.0f64).exp()).abs() <= 0.06, "oob fraction {oob}");
    }

    #[test]
    fn forests_are_deterministic() {
        let ds = gaussian(60, 4, 2);
        let params = ForestParams {
            n_estimators: 5,
            ..ForestParams::regression()
        };
        assert_eq!(fit_forest(&ds, &params, 9).unwrap(), fit_forest(&ds, &params, 9).unwrap());
        assert_ne!(fit_forest(&ds, &params, 9).unwrap(), fit_forest(&ds, &params, 10).unwrap());
    }

    #[test]
    fn large_leaf_size_limits_depth() {
        let ds = gaussian(40, 3, 3);
        let params = ForestParams {
            n_estimators: 1,
            min_samples_leaf: 20,
            max_features: MaxFeatures::Fraction(1.0),
            max_depth: None,
        };
        let f = fit_forest(&ds, &params, 0).unwrap();
        assert!(f.trees()[0].depth() <= 1);
    }

    #[test]
    fn prediction_is_the_tree_average() {
        let ds = gaussian(80, 3, 4);
        let params = ForestParams {
            n_estimators: 7,
            ..ForestParams::regression()
        };
        let f = fit_forest(&ds, &params, 5).unwrap();
        let pred = f.predict(ds.features().view()).unwrap();
        for i in 0..ds.n_rows() {
            let mean: f64 = f
                .trees()
                .iter()
                .map(|t| t.predict_row(ds.features().row(i)).unwrap())
                .sum::<f64>()
                / 7.0;
            assert!((pred[i] - mean).abs() < 1e-12);
        }
        assert!(f.predict(Array2::zeros((1, 2)).view()).is_err());
    }

    #[test]
    fn constant_and_two_tree_forests() {
        let leafs = vec![TreeModel::leaf(3.5, 2, 1), TreeModel::leaf(3.5, 2, 1)];
        let f = ForestModel::from_parts(leafs, vec![vec![1, 1]; 2], ForestParams::regression(), 0, Task::Regression, 2, 1)
            .unwrap();
        assert_eq!(f.predict(array![[1.0], [-7.0]].view()).unwrap(), vec![3.5, 3.5]);

        let two = vec![TreeModel::leaf(0.0, 2, 1), TreeModel::leaf(1.0, 2, 1)];
        let f = ForestModel::from_parts(two, vec![vec![2, 0], vec![1, 1]], ForestParams::regression(), 0, Task::Regression, 2, 1)
            .unwrap();
        assert_eq!(f.predict(array![[0.0]].view()).unwrap(), vec![0.5]);
        assert_eq!(f.oob_rows(0).unwrap(), vec![1]);
        assert!(f.oob_rows(1).unwrap().is_empty());
        assert!(f.oob_rows(2).is_err());
    }

    #[test]
    fn oob_and_in_bag_partition_rows() {
        let ds = gaussian(30, 2, 6);
        let params = ForestParams {
            n_estimators: 3,
            ..ForestParams::regression()
        };
        let f = fit_forest(&ds, &params, 1).unwrap();
        let oob = f.oob_rows(0).unwrap();
        let inbag: Vec<usize> = (0..30).filter(|&i| f.in_bag_counts()[0][i] > 0).collect();
        assert_eq!(oob.len() + inbag.len(), 30);
        assert!(oob.iter().all(|i| !inbag.contains(i)));
    }

    #[test]
    fn classification_predictions_are_probabilities() {
        let mut rng = rng_from_seed(8);
        let x = Array2::from_shape_fn((120, 4), |_| StandardNormal.sample(&mut rng));
        let y = Array1::from_shape_fn(120, |i| if x[[i, 0]] + x[[i, 1]] > 0.0 { 1.0 } else { 0.0 });
        let ds = Dataset::from_arrays(x, y, Task::BinaryClassification).unwrap();
        let params = ForestParams {
            n_estimators: 10,
            ..ForestParams::classification()
        };
        let f = fit_forest(&ds, &params, 3).unwrap();
        let pred = f.predict(ds.features().view()).unwrap();
        assert!(pred.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}

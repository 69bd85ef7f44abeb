//! CART trees with the split bookkeeping the stump basis needs.
//!
//! Trees are grown on multiplicity-weighted rows: a row with weight `w`
//! behaves exactly like `w` copies of itself, and rows with weight zero are
//! invisible to the fit. All node counts (`N(v)`) are weighted counts.

use std::fmt;
use std::str::FromStr;

use ndarray::{ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Task;
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// How many features are scanned at each node.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaxFeatures {
    All,
    Sqrt,
    Fraction(f64),
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, p: usize) -> usize {
        let m = match self {
            MaxFeatures::All => p,
            MaxFeatures::Sqrt => (p as f64).sqrt().floor() as usize,
            MaxFeatures::Fraction(f) => (f * p as f64).floor() as usize,
            MaxFeatures::Count(c) => c,
        };
        m.clamp(1, p.max(1))
    }
}

impl fmt::Display for MaxFeatures {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MaxFeatures::All => write!(f, "all"),
            MaxFeatures::Sqrt => write!(f, "sqrt"),
            MaxFeatures::Fraction(v) => write!(f, "{v:?}"),
            MaxFeatures::Count(c) => write!(f, "{c}"),
        }
    }
}

impl FromStr for MaxFeatures {
    type Err = Error;

    /// `all`, `sqrt`, an integer count, or a fraction in (0, 1].
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "all" => Ok(MaxFeatures::All),
            "sqrt" => Ok(MaxFeatures::Sqrt),
            t => {
                if let Ok(c) = t.parse::<usize>() {
                    if c == 0 {
                        return Err(Error::InvalidParameter("max_features count must be >= 1".into()));
                    }
                    return Ok(MaxFeatures::Count(c));
                }
                match t.parse::<f64>() {
                    Ok(f) if f > 0.0 && f <= 1.0 => Ok(MaxFeatures::Fraction(f)),
                    _ => Err(Error::InvalidParameter(format!("bad max_features `{s}`"))),
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
    pub max_depth: Option<usize>,
    pub seed: u64,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            min_samples_leaf: 1,
            max_features: MaxFeatures::All,
            max_depth: None,
            seed: 0,
        }
    }
}

/// One fitted split. Counts are in-bag (multiplicity-weighted) counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub node_id: usize,
    pub feature: usize,
    pub threshold: f64,
    pub n_left: usize,
    pub n_right: usize,
    pub n_node: usize,
    /// Impurity decrease, normalized by `n_node`.
    pub delta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NodeKind {
    Leaf,
    Internal {
        split: usize,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    /// In-bag mean response (positive-class fraction for classification).
    pub value: f64,
    pub n_samples: usize,
    pub depth: usize,
    #[serde(flatten)]
    pub kind: NodeKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    nodes: Vec<Node>,
    splits: Vec<Split>,
    split_index_by_feature: Vec<Vec<usize>>,
    n_features: usize,
}

impl TreeModel {
    /// Assembles a tree from explicit parts, checking child links and
    /// split counts.
    pub fn from_parts(nodes: Vec<Node>, splits: Vec<Split>, n_features: usize) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidParameter("tree needs a root node".into()));
        }
        let mut split_index_by_feature = vec![Vec::new(); n_features];
        for (i, s) in splits.iter().enumerate() {
            if s.feature >= n_features {
                return Err(Error::OutOfRange {
                    index: s.feature,
                    len: n_features,
                });
            }
            if s.n_left == 0 || s.n_right == 0 || s.n_left + s.n_right != s.n_node {
                return Err(Error::InvalidParameter(format!("inconsistent counts in split {i}")));
            }
            match nodes.get(s.node_id).map(|n| n.kind) {
                Some(NodeKind::Internal { split, left, right })
                    if split == i && left < nodes.len() && right < nodes.len() => {}
                _ => {
                    return Err(Error::InvalidParameter(format!(
                        "split {i} does not match node {}",
                        s.node_id
                    )))
                }
            }
            split_index_by_feature[s.feature].push(i);
        }
        Ok(Self {
            nodes,
            splits,
            split_index_by_feature,
            n_features,
        })
    }

    /// A tree with a single leaf predicting `value`.
    pub fn leaf(value: f64, n_samples: usize, n_features: usize) -> Self {
        Self {
            nodes: vec![Node {
                value,
                n_samples,
                depth: 0,
                kind: NodeKind::Leaf,
            }],
            splits: Vec::new(),
            split_index_by_feature: vec![Vec::new(); n_features],
            n_features,
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// The ordered split list (node-creation order, depth first).
    pub fn splits(&self) -> &[Split] {
        &self.splits
    }

    /// Positions in [`splits`](Self::splits) of the splits on feature `k`.
    pub fn splits_on(&self, k: usize) -> &[usize] {
        &self.split_index_by_feature[k]
    }

    pub fn split_index_by_feature(&self) -> &[Vec<usize>] {
        &self.split_index_by_feature
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    pub fn n_samples(&self) -> usize {
        self.nodes[0].n_samples
    }

    fn check_width(&self, got: usize) -> Result<()> {
        if got != self.n_features {
            return Err(Error::DimensionMismatch {
                what: "features",
                expected: self.n_features,
                got,
            });
        }
        Ok(())
    }

    /// Walks `x` from the root, yielding each split crossed and the side taken.
    pub fn path<'a>(&'a self, x: ArrayView1<'a, f64>) -> impl Iterator<Item = (usize, Side)> + 'a {
        let mut node = Some(0usize);
        std::iter::from_fn(move || {
            let id = node?;
            match self.nodes[id].kind {
                NodeKind::Leaf => {
                    node = None;
                    None
                }
                NodeKind::Internal { split, left, right } => {
                    let s = &self.splits[split];
                    if x[s.feature] <= s.threshold {
                        node = Some(left);
                        Some((split, Side::Left))
                    } else {
                        node = Some(right);
                        Some((split, Side::Right))
                    }
                }
            }
        })
    }

    pub fn leaf_of(&self, x: ArrayView1<f64>) -> usize {
        let mut id = 0;
        while let NodeKind::Internal { split, left, right } = self.nodes[id].kind {
            let s = &self.splits[split];
            id = if x[s.feature] <= s.threshold { left } else { right };
        }
        id
    }

    pub fn predict_row(&self, x: ArrayView1<f64>) -> Result<f64> {
        self.check_width(x.len())?;
        Ok(self.nodes[self.leaf_of(x)].value)
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        self.check_width(x.ncols())?;
        Ok(x
            .outer_iter()
            .map(|row| self.nodes[self.leaf_of(row)].value)
            .collect())
    }

    /// Splits encountered from root to leaf, root first.
    pub fn decision_path(&self, x: ArrayView1<f64>) -> Result<Vec<&Split>> {
        self.check_width(x.len())?;
        Ok(self.path(x).map(|(s, _)| &self.splits[s]).collect())
    }
}

fn impurity_sum(task: Task, ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    match task {
        Task::Regression => {
            let mean = ys.iter().sum::<f64>() / n;
            ys.iter().map(|y| (y - mean) * (y - mean)).sum()
        }
        Task::BinaryClassification => {
            let p = ys.iter().filter(|&&y| y == 1.0).count() as f64 / n;
            n * (1.0 - p * p - (1.0 - p) * (1.0 - p))
        }
    }
}

/// Normalized impurity decrease of a candidate split: the node's impurity
/// sum minus both children's, divided by the node size. Regression uses
/// squared error, classification Gini.
pub fn impurity_decrease(task: Task, y_node: &[f64], y_left: &[f64], y_right: &[f64]) -> Result<f64> {
    if y_left.is_empty() || y_right.is_empty() {
        return Err(Error::EmptySplit);
    }
    if y_left.len() + y_right.len() != y_node.len() {
        return Err(Error::DimensionMismatch {
            what: "rows in children",
            expected: y_node.len(),
            got: y_left.len() + y_right.len(),
        });
    }
    let total = impurity_sum(task, y_node) - impurity_sum(task, y_left) - impurity_sum(task, y_right);
    Ok(total / y_node.len() as f64)
}

/// Weighted impurity sum over `(weight, y)` pairs, two-pass for accuracy.
fn weighted_impurity_sum(task: Task, rows: impl Iterator<Item = (f64, f64)> + Clone) -> (f64, f64) {
    let (w, s) = rows.clone().fold((0.0, 0.0), |(w, s), (wi, yi)| (w + wi, s + wi * yi));
    let mean = s / w;
    let imp = match task {
        Task::Regression => rows.map(|(wi, yi)| wi * (yi - mean) * (yi - mean)).sum(),
        Task::BinaryClassification => w * (1.0 - mean * mean - (1.0 - mean) * (1.0 - mean)),
    };
    (imp, mean)
}

struct Grower<'a> {
    x: ArrayView2<'a, f64>,
    y: ArrayView1<'a, f64>,
    weights: &'a [u32],
    task: Task,
    params: &'a TreeParams,
    m_try: usize,
    rng: crate::rng::Rng,
    nodes: Vec<Node>,
    splits: Vec<Split>,
}

struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Grower<'_> {
    fn node_stats(&self, rows: &[usize]) -> (usize, f64, f64) {
        let count: usize = rows.iter().map(|&i| self.weights[i] as usize).sum();
        let (imp, mean) = weighted_impurity_sum(
            self.task,
            rows.iter().map(|&i| (self.weights[i] as f64, self.y[i])),
        );
        (count, imp, mean)
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let (count, imp, mean) = self.node_stats(&rows);
        let id = self.nodes.len();
        self.nodes.push(Node {
            value: mean,
            n_samples: count,
            depth,
            kind: NodeKind::Leaf,
        });

        let msl = self.params.min_samples_leaf.max(1);
        let pure = rows.iter().all(|&i| self.y[i] == self.y[rows[0]]);
        let depth_capped = self.params.max_depth.is_some_and(|d| depth >= d);
        if count < 2 * msl || pure || depth_capped {
            return id;
        }
        let Some(best) = self.best_split(&rows, mean, msl) else {
            return id;
        };

        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&i| self.x[[i, best.feature]] <= best.threshold);
        let (n_left, imp_left, _) = self.node_stats(&left_rows);
        let (n_right, imp_right, _) = self.node_stats(&right_rows);
        let delta = (imp - imp_left - imp_right) / count as f64;
        if !(delta > 0.0) || best.gain <= 1e-12 * imp {
            return id;
        }

        let split_idx = self.splits.len();
        self.splits.push(Split {
            node_id: id,
            feature: best.feature,
            threshold: best.threshold,
            n_left,
            n_right,
            n_node: count,
            delta,
        });
        let left = self.grow(left_rows, depth + 1);
        let right = self.grow(right_rows, depth + 1);
        self.nodes[id].kind = NodeKind::Internal {
            split: split_idx,
            left,
            right,
        };
        id
    }

    fn best_split(&mut self, rows: &[usize], mean: f64, msl: usize) -> Option<Candidate> {
        let p = self.x.ncols();
        let mut features: Vec<usize> = if self.m_try >= p {
            (0..p).collect()
        } else {
            let mut order: Vec<usize> = (0..p).collect();
            order.shuffle(&mut self.rng);
            // features constant on this node do not use up the budget
            let mut picked = Vec::with_capacity(self.m_try);
            for k in order {
                if picked.len() == self.m_try {
                    break;
                }
                let first = self.x[[rows[0], k]];
                if rows.iter().any(|&i| self.x[[i, k]] != first) {
                    picked.push(k);
                }
            }
            picked
        };
        features.sort_unstable();

        let total_w: f64 = rows.iter().map(|&i| self.weights[i] as f64).sum();
        let mut best: Option<Candidate> = None;
        let mut order: Vec<(f64, f64, f64)> = Vec::with_capacity(rows.len());
        for &k in &features {
            order.clear();
            order.extend(
                rows.iter()
                    .map(|&i| (self.x[[i, k]], self.weights[i] as f64, self.y[i] - mean)),
            );
            order.sort_by(|a, b| a.0.total_cmp(&b.0));
            let total_s: f64 = order.iter().map(|(_, w, y)| w * y).sum();
            let (mut wl, mut sl) = (0.0, 0.0);
            for pos in 0..order.len() - 1 {
                let (xv, w, yc) = order[pos];
                wl += w;
                sl += w * yc;
                let next = order[pos + 1].0;
                if next <= xv {
                    continue;
                }
                let wr = total_w - wl;
                if wl < msl as f64 || wr < msl as f64 {
                    continue;
                }
                let sr = total_s - sl;
                let gain = sl * sl / wl + sr * sr / wr - total_s * total_s / total_w;
                let better = match &best {
                    None => gain > 0.0,
                    Some(b) => gain > b.gain,
                };
                if better {
                    best = Some(Candidate {
                        feature: k,
                        threshold: xv + (next - xv) / 2.0,
                        gain,
                    });
                }
            }
        }
        best
    }
}

/// Fits a tree with unit weight on every row.
pub fn fit_tree(x: ArrayView2<f64>, y: ArrayView1<f64>, params: &TreeParams, task: Task) -> Result<TreeModel> {
    let weights = vec![1u32; x.nrows()];
    fit_tree_weighted(x, y, &weights, params, task)
}

/// Fits a tree where row `i` counts `weights[i]` times. Rows with weight
/// zero are ignored.
pub fn fit_tree_weighted(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    weights: &[u32],
    params: &TreeParams,
    task: Task,
) -> Result<TreeModel> {
    let (n, p) = x.dim();
    if y.len() != n || weights.len() != n {
        return Err(Error::DimensionMismatch {
            what: "rows",
            expected: n,
            got: if y.len() != n { y.len() } else { weights.len() },
        });
    }
    if let Some(row) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            row,
            column: "<response>".into(),
        });
    }
    let rows: Vec<usize> = (0..n).filter(|&i| weights[i] > 0).collect();
    if rows.is_empty() {
        return Err(Error::InvalidParameter("all weights are zero".into()));
    }
    let mut grower = Grower {
        x,
        y,
        weights,
        task,
        params,
        m_try: params.max_features.resolve(p),
        rng: rng_from_seed(params.seed),
        nodes: Vec::new(),
        splits: Vec::new(),
    };
    grower.grow(rows, 0);
    TreeModel::from_parts(grower.nodes, grower.splits, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use ndarray::{array, Array1, Array2};
    use proptest::prelude::*;
    use rand::Rng as _;

    fn reg(y: &[f64], l: &[f64], r: &[f64]) -> f64 {
        impurity_decrease(Task::Regression, y, l, r).unwrap()
    }

    #[test]
    fn impurity_decrease_examples() {
        assert!((reg(&[0., 0., 1., 1.], &[0., 0.], &[1., 1.]) - 0.25).abs() < 1e-15);
        assert!((reg(&[1., 2., 3., 4.], &[1., 2.], &[3., 4.]) - 1.0).abs() < 1e-15);
        assert_eq!(reg(&[1., 1., 1., 1.], &[1.], &[1., 1., 1.]), 0.0);
        assert!(matches!(
            impurity_decrease(Task::Regression, &[1.0], &[], &[1.0]),
            Err(Error::EmptySplit)
        ));
    }

    #[test]
    fn gini_decrease_doubles_variance_decrease_for_binary_labels() {
        let g = impurity_decrease(Task::BinaryClassification, &[0., 0., 1., 1.], &[0., 0.], &[1., 1.]).unwrap();
        assert!((g - 0.5).abs() < 1e-15);
    }

    fn four_point_tree() -> TreeModel {
        let x = array![[1.0], [2.0], [3.0], [4.0]];
        let y = array![0.0, 0.0, 1.0, 1.0];
        fit_tree(x.view(), y.view(), &TreeParams::default(), Task::Regression).unwrap()
    }

    #[test]
    fn four_point_root_split() {
        let t = four_point_tree();
        assert_eq!(t.splits().len(), 1);
        let s = &t.splits()[0];
        assert_eq!(s.feature, 0);
        assert_eq!(s.threshold, 2.5);
        assert!((s.delta - 0.25).abs() < 1e-15);
        assert_eq!((s.n_left, s.n_right, s.n_node), (2, 2, 4));
        assert_eq!(t.nodes().len(), 3);
        assert_eq!(t.predict_row(array![1.0].view()).unwrap(), 0.0);
        assert_eq!(t.predict_row(array![2.5].view()).unwrap(), 0.0);
        assert_eq!(t.predict_row(array![2.5000001].view()).unwrap(), 1.0);
    }

    #[test]
    fn constant_response_gives_single_leaf() {
        let x = array![[1.0], [2.0], [3.0]];
        let y = array![4.0, 4.0, 4.0];
        let t = fit_tree(x.view(), y.view(), &TreeParams::default(), Task::Regression).unwrap();
        assert!(t.splits().is_empty());
        assert_eq!(t.nodes()[0].value, 4.0);
        assert_eq!(t.predict(array![[-100.0], [100.0]].view()).unwrap(), vec![4.0, 4.0]);
        assert!(t.decision_path(array![0.0].view()).unwrap().is_empty());
    }

    #[test]
    fn too_few_rows_gives_single_leaf() {
        let x = array![[1.0], [2.0], [3.0]];
        let y = array![0.0, 1.0, 5.0];
        let params = TreeParams {
            min_samples_leaf: 2,
            ..TreeParams::default()
        };
        let t = fit_tree(x.view(), y.view(), &params, Task::Regression).unwrap();
        assert!(t.splits().is_empty());
        assert!((t.nodes()[0].value - 2.0).abs() < 1e-15);
    }

    #[test]
    fn non_finite_response_is_an_error() {
        let x = array![[1.0], [2.0]];
        let y = array![0.0, f64::INFINITY];
        assert!(fit_tree(x.view(), y.view(), &TreeParams::default(), Task::Regression).is_err());
    }

    #[test]
    fn prediction_checks_width() {
        let t = four_point_tree();
        assert!(t.predict(array![[1.0, 2.0]].view()).is_err());
        assert!(t.decision_path(array![1.0, 2.0].view()).is_err());
    }

    fn chain_tree() -> TreeModel {
        // root: x0 <= 0 ; left child: x1 <= 1 ; right of root is a leaf
        let nodes = vec![
            Node { value: 0.0, n_samples: 6, depth: 0, kind: NodeKind::Internal { split: 0, left: 1, right: 4 } },
            Node { value: 0.0, n_samples: 4, depth: 1, kind: NodeKind::Internal { split: 1, left: 2, right: 3 } },
            Node { value: -1.0, n_samples: 1, depth: 2, kind: NodeKind::Leaf },
            Node { value: 2.0, n_samples: 3, depth: 2, kind: NodeKind::Leaf },
            Node { value: 5.0, n_samples: 2, depth: 1, kind: NodeKind::Leaf },
        ];
        let splits = vec![
            Split { node_id: 0, feature: 0, threshold: 0.0, n_left: 4, n_right: 2, n_node: 6, delta: 1.0 },
            Split { node_id: 1, feature: 1, threshold: 1.0, n_left: 1, n_right: 3, n_node: 4, delta: 0.5 },
        ];
        TreeModel::from_parts(nodes, splits, 2).unwrap()
    }

    #[test]
    fn decision_path_traces_root_first() {
        let t = chain_tree();
        let path = t.decision_path(array![-1.0, 0.5].view()).unwrap();
        assert_eq!(path.len(), 2);
        assert_eq!(path[0].node_id, 0);
        assert_eq!(path[1].node_id, 1);
        let path = t.decision_path(array![3.0, 0.5].view()).unwrap();
        assert_eq!(path.len(), 1);
        assert_eq!(path[0].node_id, 0);
        assert_eq!(t.predict_row(array![-1.0, 0.5].view()).unwrap(), -1.0);
        assert_eq!(t.splits_on(1), &[1]);
    }

    #[test]
    fn from_parts_rejects_bad_counts() {
        let t = chain_tree();
        let mut splits = t.splits().to_vec();
        splits[1].n_left = 0;
        assert!(TreeModel::from_parts(t.nodes().to_vec(), splits, 2).is_err());
    }

    #[test]
    fn max_features_resolution() {
        assert_eq!(MaxFeatures::Fraction(0.33).resolve(10), 3);
        assert_eq!(MaxFeatures::Fraction(0.33).resolve(2), 1);
        assert_eq!(MaxFeatures::Sqrt.resolve(10), 3);
        assert_eq!(MaxFeatures::Sqrt.resolve(1), 1);
        assert_eq!(MaxFeatures::Count(50).resolve(10), 10);
        assert_eq!("sqrt".parse::<MaxFeatures>().unwrap(), MaxFeatures::Sqrt);
        assert_eq!("0.33".parse::<MaxFeatures>().unwrap(), MaxFeatures::Fraction(0.33));
        assert_eq!("4".parse::<MaxFeatures>().unwrap(), MaxFeatures::Count(4));
        assert!("1.5".parse::<MaxFeatures>().is_err());
    }

    #[test]
    fn serde_round_trip() {
        let t = chain_tree();
        let json = serde_json::to_string(&t).unwrap();
        let back: TreeModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
    }

    fn random_problem(seed: u64, n: usize, p: usize) -> (Array2<f64>, Array1<f64>, Vec<u32>) {
        let mut rng = rng_from_seed(seed);
        let x = Array2::from_shape_fn((n, p), |_| (rng.random_range(0..8) as f64) / 2.0);
        let y = Array1::from_shape_fn(n, |i| x[[i, 0]] * 2.0 - x[[i, p - 1]] + rng.random::<f64>());
        let w = (0..n).map(|_| rng.random_range(0..3u32)).collect();
        (x, y, w)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn fitted_trees_satisfy_node_invariants(seed in 0u64..10_000, n in 8usize..60, p in 1usize..5, msl in 1usize..4) {
            let (x, y, mut w) = random_problem(seed, n, p);
            w[0] = w[0].max(1);
            let params = TreeParams { min_samples_leaf: msl, max_features: MaxFeatures::All, max_depth: None, seed };
            let t = fit_tree_weighted(x.view(), y.view(), &w, &params, Task::Regression).unwrap();
            let total: usize = w.iter().map(|&v| v as usize).sum();
            prop_assert_eq!(t.n_samples(), total);

            // in-bag leaf means and counts
            let mut sums = vec![(0.0f64, 0usize); t.nodes().len()];
            for i in 0..n {
                let leaf = t.leaf_of(x.row(i));
                sums[leaf].0 += w[i] as f64 * y[i];
                sums[leaf].1 += w[i] as usize;
            }
            for (id, node) in t.nodes().iter().enumerate() {
                if node.kind == NodeKind::Leaf && sums[id].1 > 0 {
                    prop_assert!((sums[id].0 / sums[id].1 as f64 - node.value).abs() < 1e-12);
                    prop_assert_eq!(sums[id].1, node.n_samples);
                }
            }
            for s in t.splits() {
                prop_assert!(s.n_left >= msl && s.n_right >= msl);
                prop_assert_eq!(s.n_left + s.n_right, s.n_node);
                prop_assert!(s.delta >= 0.0);
                prop_assert_eq!(t.nodes()[s.node_id].n_samples, s.n_node);
            }

            // weighted sum of decreases telescopes to the total variance reduction
            let nn = total as f64;
            let mean = (0..n).map(|i| w[i] as f64 * y[i]).sum::<f64>() / nn;
            let var = (0..n).map(|i| w[i] as f64 * (y[i] - mean).powi(2)).sum::<f64>() / nn;
            let mut within = 0.0;
            for i in 0..n {
                let leaf = t.leaf_of(x.row(i));
                within += w[i] as f64 * (y[i] - t.nodes()[leaf].value).powi(2);
            }
            let reduction: f64 = t.splits().iter().map(|s| s.n_node as f64 * s.delta / nn).sum();
            prop_assert!((reduction - (var - within / nn)).abs() < 1e-10);

            let again = fit_tree_weighted(x.view(), y.view(), &w, &params, Task::Regression).unwrap();
            prop_assert_eq!(again, t);
        }
    }
}

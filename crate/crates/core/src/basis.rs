//! Stump-basis linearization of a fitted tree.
//!
//! Each split `s` becomes a column taking `N_R / sqrt(N_L N_R)` on rows
//! routed to its left child, `-N_L / sqrt(N_L N_R)` on rows routed right, and
//! zero on rows that never reach its node. Counts are the in-bag counts
//! frozen at fit time.

use ndarray::{concatenate, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::{Side, Split, TreeModel};

/// Column layout of one tree's augmented basis: all stump columns in split
/// order, then one raw column per feature the tree splits on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeBasis {
    pub tree_ref: usize,
    /// Number of stump columns (= number of splits).
    pub n_stumps: usize,
    /// Features whose raw column is appended, ascending.
    pub raw_columns: Vec<usize>,
    /// Owning feature of every column.
    pub column_owner: Vec<usize>,
}

impl NodeBasis {
    pub fn for_tree(tree: &TreeModel, tree_ref: usize) -> Self {
        let raw_columns: Vec<usize> = (0..tree.n_features())
            .filter(|&k| !tree.splits_on(k).is_empty())
            .collect();
        let column_owner = tree
            .splits()
            .iter()
            .map(|s| s.feature)
            .chain(raw_columns.iter().copied())
            .collect();
        Self {
            tree_ref,
            n_stumps: tree.splits().len(),
            raw_columns,
            column_owner,
        }
    }

    pub fn n_columns(&self) -> usize {
        self.column_owner.len()
    }

    /// Column index of the raw column for `feature`, if appended.
    pub fn raw_column_of(&self, feature: usize) -> Option<usize> {
        self.raw_columns
            .binary_search(&feature)
            .ok()
            .map(|pos| self.n_stumps + pos)
    }
}

fn stump_constants(split: &Split) -> (f64, f64) {
    let (l, r) = (split.n_left as f64, split.n_right as f64);
    let denom = (l * r).sqrt();
    (r / denom, -l / denom)
}

/// Value of a split's stump at `x`, or zero if `x` does not reach the
/// split's node.
pub fn stump_value(x: ArrayView1<f64>, split_index: usize, tree: &TreeModel) -> f64 {
    tree.path(x)
        .find(|(s, _)| *s == split_index)
        .map(|(s, side)| side_value(&tree.splits()[s], side))
        .unwrap_or(0.0)
}

pub(crate) fn side_value(split: &Split, side: Side) -> f64 {
    let (left, right) = stump_constants(split);
    match side {
        Side::Left => left,
        Side::Right => right,
    }
}

/// The nonzero stump entries of one row: `(split index, value)` along its path.
pub fn stump_path(tree: &TreeModel, x: ArrayView1<f64>) -> Vec<(usize, f64)> {
    tree.path(x)
        .map(|(s, side)| (s, side_value(&tree.splits()[s], side)))
        .collect()
}

/// The `n x |S|` stump matrix.
pub fn transform(x: ArrayView2<f64>, tree: &TreeModel) -> Result<Array2<f64>> {
    if x.ncols() != tree.n_features() {
        return Err(Error::DimensionMismatch {
            what: "features",
            expected: tree.n_features(),
            got: x.ncols(),
        });
    }
    let mut psi = Array2::zeros((x.nrows(), tree.splits().len()));
    for (i, row) in x.outer_iter().enumerate() {
        for (s, v) in stump_path(tree, row) {
            psi[[i, s]] = v;
        }
    }
    Ok(psi)
}

/// Appends raw columns for every split feature to `psi`.
pub fn augment(
    psi: ArrayView2<f64>,
    x: ArrayView2<f64>,
    tree: &TreeModel,
    tree_ref: usize,
) -> Result<(Array2<f64>, NodeBasis)> {
    if psi.nrows() != x.nrows() || psi.ncols() != tree.splits().len() {
        return Err(Error::DimensionMismatch {
            what: "stump matrix shape",
            expected: tree.splits().len(),
            got: psi.ncols(),
        });
    }
    let basis = NodeBasis::for_tree(tree, tree_ref);
    let raw = x.select(Axis(1), &basis.raw_columns);
    let combined = concatenate(Axis(1), &[psi, raw.view()])
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok((combined, basis))
}

/// `transform` followed by `augment`.
pub fn augmented_design(x: ArrayView2<f64>, tree: &TreeModel, tree_ref: usize) -> Result<(Array2<f64>, NodeBasis)> {
    let psi = transform(x, tree)?;
    augment(psi.view(), x, tree, tree_ref)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::{Node, NodeKind};
    use ndarray::array;

    fn depth_one(n_left: usize, n_right: usize, feature: usize, p: usize) -> TreeModel {
        let n = n_left + n_right;
        let nodes = vec![
            Node { value: 0.0, n_samples: n, depth: 0, kind: NodeKind::Internal { split: 0, left: 1, right: 2 } },
            Node { value: 0.0, n_samples: n_left, depth: 1, kind: NodeKind::Leaf },
            Node { value: 1.0, n_samples: n_right, depth: 1, kind: NodeKind::Leaf },
        ];
        let splits = vec![Split { node_id: 0, feature, threshold: 0.0, n_left, n_right, n_node: n, delta: 0.1 }];
        TreeModel::from_parts(nodes, splits, p).unwrap()
    }

    #[test]
    fn symmetric_counts_give_unit_values() {
        let t = depth_one(2, 2, 0, 1);
        assert_eq!(stump_value(array![-1.0].view(), 0, &t), 1.0);
        assert_eq!(stump_value(array![1.0].view(), 0, &t), -1.0);
    }

    #[test]
    fn asymmetric_counts() {
        let t = depth_one(1, 4, 0, 1);
        let left = stump_value(array![-1.0].view(), 0, &t);
        let right = stump_value(array![1.0].view(), 0, &t);
        assert!((left - 2.0).abs() < 1e-15);
        assert!((right + 0.5).abs() < 1e-15);
        assert!((1.0 * left + 4.0 * right).abs() < 1e-15);
    }

    #[test]
    fn rows_outside_node_get_zero() {
        // root on x0, right child splits on x1
        let nodes = vec![
            Node { value: 0.0, n_samples: 6, depth: 0, kind: NodeKind::Internal { split: 0, left: 1, right: 2 } },
            Node { value: 0.0, n_samples: 2, depth: 1, kind: NodeKind::Leaf },
            Node { value: 0.0, n_samples: 4, depth: 1, kind: NodeKind::Internal { split: 1, left: 3, right: 4 } },
            Node { value: 0.0, n_samples: 1, depth: 2, kind: NodeKind::Leaf },
            Node { value: 0.0, n_samples: 3, depth: 2, kind: NodeKind::Leaf },
        ];
        let splits = vec![
            Split { node_id: 0, feature: 0, threshold: 0.0, n_left: 2, n_right: 4, n_node: 6, delta: 0.1 },
            Split { node_id: 2, feature: 1, threshold: 0.0, n_left: 1, n_right: 3, n_node: 4, delta: 0.1 },
        ];
        let t = TreeModel::from_parts(nodes, splits, 2).unwrap();
        assert_eq!(stump_value(array![-1.0, -1.0].view(), 1, &t), 0.0);
        assert!(stump_value(array![1.0, -1.0].view(), 1, &t) > 0.0);
    }

    #[test]
    fn single_leaf_tree_has_empty_basis() {
        let t = TreeModel::leaf(1.0, 3, 2);
        let x = array![[1.0, 2.0], [3.0, 4.0]];
        let psi = transform(x.view(), &t).unwrap();
        assert_eq!(psi.dim(), (2, 0));
        let (z, basis) = augment(psi.view(), x.view(), &t, 0).unwrap();
        assert_eq!(z.ncols(), 0);
        assert_eq!(basis.n_columns(), 0);
    }

    #[test]
    fn depth_one_basis_has_no_zeros() {
        let t = depth_one(2, 3, 0, 1);
        let x = array![[-1.0], [0.5], [2.0]];
        let psi = transform(x.view(), &t).unwrap();
        assert!(psi.iter().all(|v| *v != 0.0));
    }

    #[test]
    fn raw_column_for_each_split_feature() {
        let t = depth_one(2, 2, 3, 5);
        let x = ndarray::Array2::from_shape_fn((4, 5), |(i, j)| (i * 5 + j) as f64);
        let (z, basis) = augmented_design(x.view(), &t, 0).unwrap();
        assert_eq!(basis.raw_columns, vec![3]);
        assert_eq!(z.ncols(), 2);
        assert_eq!(basis.column_owner, vec![3, 3]);
        assert_eq!(basis.raw_column_of(3), Some(1));
        assert_eq!(basis.raw_column_of(0), None);
        for i in 0..4 {
            assert_eq!(z[[i, 1]], x[[i, 3]]);
        }
    }

    #[test]
    fn column_count_is_splits_plus_distinct_features() {
        let nodes = vec![
            Node { value: 0.0, n_samples: 8, depth: 0, kind: NodeKind::Internal { split: 0, left: 1, right: 4 } },
            Node { value: 0.0, n_samples: 4, depth: 1, kind: NodeKind::Internal { split: 1, left: 2, right: 3 } },
            Node { value: 0.0, n_samples: 2, depth: 2, kind: NodeKind::Leaf },
            Node { value: 0.0, n_samples: 2, depth: 2, kind: NodeKind::Leaf },
            Node { value: 0.0, n_samples: 4, depth: 1, kind: NodeKind::Internal { split: 2, left: 5, right: 6 } },
            Node { value: 0.0, n_samples: 2, depth: 2, kind: NodeKind::Leaf },
            Node { value: 0.0, n_samples: 2, depth: 2, kind: NodeKind::Internal { split: 3, left: 7, right: 8 } },
            Node { value: 0.0, n_samples: 1, depth: 3, kind: NodeKind::Leaf },
            Node { value: 0.0, n_samples: 1, depth: 3, kind: NodeKind::Leaf },
        ];
        let mk = |node_id, feature, n_left, n_right| Split {
            node_id,
            feature,
            threshold: 0.0,
            n_left,
            n_right,
            n_node: n_left + n_right,
            delta: 0.1,
        };
        let splits = vec![mk(0, 0, 4, 4), mk(1, 2, 2, 2), mk(4, 0, 2, 2), mk(6, 2, 1, 1)];
        let t = TreeModel::from_parts(nodes, splits, 4).unwrap();
        let basis = NodeBasis::for_tree(&t, 0);
        assert_eq!(basis.n_columns(), 6);
        assert_eq!(basis.column_owner, vec![0, 2, 0, 2, 0, 2]);
    }

    #[test]
    fn dimension_mismatch() {
        let t = depth_one(2, 2, 0, 2);
        assert!(transform(array![[1.0]].view(), &t).is_err());
    }
}

//! LMDI+ local importances, plus the MDI and Local MDI baselines.

use std::fs::File;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{augmented_design, stump_path, NodeBasis};
use crate::data::{format_float, Dataset, Task};
use crate::error::{Error, Result};
use crate::forest::ForestModel;
use crate::glm::{fit_elastic_net, fit_logistic_elastic_net, FittedGlm, GlmConfig, Link};
use crate::rng::derive_seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    LmdiPlus,
    LocalMdi,
    /// Global MDI repeated on every row; a non-local baseline.
    Mdi,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::LmdiPlus => "lmdi-plus",
            Method::LocalMdi => "local-mdi",
            Method::Mdi => "mdi",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lmdi-plus" | "lmdi+" => Ok(Method::LmdiPlus),
            "local-mdi" => Ok(Method::LocalMdi),
            "mdi" => Ok(Method::Mdi),
            other => Err(Error::InvalidParameter(format!("unknown method `{other}`"))),
        }
    }
}

/// Per-sample, per-feature importance scores from one method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LfiMatrix {
    pub scores: Array2<f64>,
    pub method: Method,
    pub model_seed: u64,
    pub row_ids: Vec<usize>,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    method: &'a str,
    model_seed: u64,
    n: usize,
    p: usize,
}

impl LfiMatrix {
    pub fn new(scores: Array2<f64>, method: Method, model_seed: u64) -> Self {
        let row_ids = (0..scores.nrows()).collect();
        Self {
            scores,
            method,
            model_seed,
            row_ids,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.scores.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.scores.ncols()
    }

    /// One row per sample, header = feature names.
    pub fn write_csv(&self, path: impl AsRef<Path>, feature_names: &[String]) -> Result<()> {
        if feature_names.len() != self.n_features() {
            return Err(Error::DimensionMismatch {
                what: "feature names",
                expected: self.n_features(),
                got: feature_names.len(),
            });
        }
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(feature_names)?;
        for row in self.scores.outer_iter() {
            w.write_record(row.iter().map(|v| format_float(*v)))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// `{method, model_seed, n, p}`.
    pub fn write_sidecar(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(
            file,
            &Sidecar {
                method: self.method.name(),
                model_seed: self.model_seed,
                n: self.n_rows(),
                p: self.n_features(),
            },
        )?;
        Ok(())
    }
}

/// One augmented basis and one fitted GLM per tree of a forest.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FittedExplainer {
    forest: ForestModel,
    bases: Vec<NodeBasis>,
    glms: Vec<FittedGlm>,
    /// Training means of each tree's augmented columns.
    column_means: Vec<Array1<f64>>,
    task: Task,
}

/// Fits the per-tree GLMs on all training rows (in-bag and out-of-bag).
pub fn fit_explainer(forest: &ForestModel, ds_train: &Dataset, glm_config: &GlmConfig) -> Result<FittedExplainer> {
    if ds_train.n_rows() != forest.n_train() || ds_train.n_features() != forest.n_features() {
        return Err(Error::DimensionMismatch {
            what: "training rows",
            expected: forest.n_train(),
            got: ds_train.n_rows(),
        });
    }
    let x = ds_train.features().view();
    let y = ds_train.response().view();
    let fitted: Vec<(NodeBasis, FittedGlm, Array1<f64>)> = forest
        .trees()
        .par_iter()
        .enumerate()
        .map(|(t, tree)| {
            let (z, basis) = augmented_design(x, tree, t)?;
            let link = match forest.task() {
                Task::Regression => Link::Identity,
                Task::BinaryClassification => Link::Logit,
            };
            let means = z.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(0));
            if basis.n_columns() == 0 {
                return Ok((basis, FittedGlm::intercept_only(link, y, 0), means));
            }
            let cfg = GlmConfig {
                seed: derive_seed(glm_config.seed, t as u64),
                ..glm_config.clone()
            };
            let glm = match link {
                Link::Identity => fit_elastic_net(z.view(), y, &cfg)?,
                Link::Logit => fit_logistic_elastic_net(z.view(), y, &cfg)?,
            };
            Ok((basis, glm, means))
        })
        .collect::<Result<_>>()?;
    let mut bases = Vec::with_capacity(fitted.len());
    let mut glms = Vec::with_capacity(fitted.len());
    let mut column_means = Vec::with_capacity(fitted.len());
    for (b, g, m) in fitted {
        bases.push(b);
        glms.push(g);
        column_means.push(m);
    }
    Ok(FittedExplainer {
        forest: forest.clone(),
        bases,
        glms,
        column_means,
        task: forest.task(),
    })
}

impl FittedExplainer {
    pub fn forest(&self) -> &ForestModel {
        &self.forest
    }

    pub fn bases(&self) -> &[NodeBasis] {
        &self.bases
    }

    pub fn glms(&self) -> &[FittedGlm] {
        &self.glms
    }

    pub fn column_means(&self) -> &[Array1<f64>] {
        &self.column_means
    }

    pub fn task(&self) -> Task {
        self.task
    }

    fn check_width(&self, got: usize) -> Result<()> {
        if got != self.forest.n_features() {
            return Err(Error::DimensionMismatch {
                what: "features",
                expected: self.forest.n_features(),
                got,
            });
        }
        Ok(())
    }

    /// Adds tree `t`'s attribution of row `x` into `out`, scaled by `weight`.
    fn accumulate(&self, t: usize, x: ArrayView1<f64>, weight: f64, out: &mut [f64]) {
        let tree = &self.forest.trees()[t];
        let basis = &self.bases[t];
        let coef = &self.glms[t].coefficients;
        for (s, v) in stump_path(tree, x) {
            out[tree.splits()[s].feature] += weight * coef[s] * v;
        }
        for (pos, &k) in basis.raw_columns.iter().enumerate() {
            out[k] += weight * coef[basis.n_stumps + pos] * x[k];
        }
    }

    /// Tree `t`'s per-feature attribution at `x`: the basis values owned by
    /// each feature dotted with their coefficients. Features the tree never
    /// splits on get zero; the intercept is not attributed.
    pub fn lmdi_plus_tree(&self, t: usize, x: ArrayView1<f64>) -> Result<Vec<f64>> {
        self.check_width(x.len())?;
        if t >= self.bases.len() {
            return Err(Error::OutOfRange {
                index: t,
                len: self.bases.len(),
            });
        }
        let mut out = vec![0.0; self.forest.n_features()];
        self.accumulate(t, x, 1.0, &mut out);
        Ok(out)
    }

    /// Tree `t`'s augmented basis row at `x` (for checking additivity).
    pub fn basis_row(&self, t: usize, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check_width(x.len())?;
        let tree = &self.forest.trees()[t];
        let basis = &self.bases[t];
        let mut row = Array1::zeros(basis.n_columns());
        for (s, v) in stump_path(tree, x) {
            row[s] = v;
        }
        for (pos, &k) in basis.raw_columns.iter().enumerate() {
            row[basis.n_stumps + pos] = x[k];
        }
        Ok(row)
    }

    /// Ensemble LMDI+: the per-tree attributions averaged over all trees.
    pub fn lmdi_plus(&self, x: ArrayView2<f64>) -> Result<LfiMatrix> {
        self.check_width(x.ncols())?;
        let n_trees = self.bases.len();
        let weight = 1.0 / n_trees as f64;
        let per_tree: Vec<Array2<f64>> = (0..n_trees)
            .into_par_iter()
            .map(|t| {
                let mut m = Array2::zeros(x.dim());
                for (i, row) in x.outer_iter().enumerate() {
                    let out = m.row_mut(i).into_slice().expect("standard layout");
                    self.accumulate(t, row, 1.0, out);
                }
                m
            })
            .collect();
        let mut scores = Array2::zeros(x.dim());
        for m in &per_tree {
            scores.scaled_add(weight, m);
        }
        Ok(LfiMatrix::new(scores, Method::LmdiPlus, self.forest.seed()))
    }
}

/// Local MDI: per tree, the stored impurity decreases of the splits on each
/// sample's decision path, summed per feature and averaged over trees.
pub fn local_mdi(forest: &ForestModel, x: ArrayView2<f64>) -> Result<LfiMatrix> {
    if x.ncols() != forest.n_features() {
        return Err(Error::DimensionMismatch {
            what: "features",
            expected: forest.n_features(),
            got: x.ncols(),
        });
    }
    let per_tree: Vec<Array2<f64>> = forest
        .trees()
        .par_iter()
        .map(|tree| {
            let mut m = Array2::zeros(x.dim());
            for (i, row) in x.outer_iter().enumerate() {
                for (s, _) in tree.path(row) {
                    let split = &tree.splits()[s];
                    m[[i, split.feature]] += split.delta;
                }
            }
            m
        })
        .collect();
    let mut scores = Array2::zeros(x.dim());
    let weight = 1.0 / forest.n_trees() as f64;
    for m in &per_tree {
        scores.scaled_add(weight, m);
    }
    Ok(LfiMatrix::new(scores, Method::LocalMdi, forest.seed()))
}

/// Per-tree MDI: `sum over splits on k of N(v) * delta / n`.
pub fn mdi_tree(tree: &crate::tree::TreeModel) -> Vec<f64> {
    let n = tree.n_samples() as f64;
    let mut out = vec![0.0; tree.n_features()];
    for s in tree.splits() {
        out[s.feature] += s.n_node as f64 * s.delta / n;
    }
    out
}

/// Global MDI averaged over trees.
pub fn mdi_global(forest: &ForestModel) -> Vec<f64> {
    let mut out = vec![0.0; forest.n_features()];
    for tree in forest.trees() {
        for (o, v) in out.iter_mut().zip(mdi_tree(tree)) {
            *o += v;
        }
    }
    let t = forest.n_trees() as f64;
    out.iter_mut().for_each(|o| *o /= t);
    out
}

/// Per-row ranks by absolute score: 1 is most important, ties go to the
/// lower feature index.
pub fn rank_features(lfi: &LfiMatrix) -> Array2<usize> {
    rank_rows(lfi.scores.view())
}

pub fn rank_rows(scores: ArrayView2<f64>) -> Array2<usize> {
    let (n, p) = scores.dim();
    let mut ranks = Array2::zeros((n, p));
    let mut order: Vec<usize> = Vec::with_capacity(p);
    for (i, row) in scores.outer_iter().enumerate() {
        order.clear();
        order.extend(0..p);
        order.sort_by(|&a, &b| row[b].abs().total_cmp(&row[a].abs()).then(a.cmp(&b)));
        for (r, &k) in order.iter().enumerate() {
            ranks[[i, k]] = r + 1;
        }
    }
    ranks
}

/// Fits whatever a method needs on `train` and scores `x`.
pub fn compute_lfi(
    method: Method,
    forest: &ForestModel,
    train: &Dataset,
    x: ArrayView2<f64>,
    glm_config: &GlmConfig,
) -> Result<LfiMatrix> {
    match method {
        Method::LmdiPlus => fit_explainer(forest, train, glm_config)?.lmdi_plus(x),
        Method::LocalMdi => local_mdi(forest, x),
        Method::Mdi => {
            if x.ncols() != forest.n_features() {
                return Err(Error::DimensionMismatch {
                    what: "features",
                    expected: forest.n_features(),
                    got: x.ncols(),
                });
            }
            let global = Array1::from(mdi_global(forest));
            let scores = Array2::from_shape_fn(x.dim(), |(_, k)| global[k]);
            Ok(LfiMatrix::new(scores, Method::Mdi, forest.seed()))
        }
    }
}

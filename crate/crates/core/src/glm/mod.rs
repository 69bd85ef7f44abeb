//! Elastic-net linear and logistic regression with cross-validated penalty
//! selection.
//!
//! Objective for the identity link:
//!
//! ```text
//! (1/2n) ||y - b0 - Z b||^2 + lambda * (l1_ratio ||b||_1 + (1 - l1_ratio)/2 ||b||_2^2)
//! ```
//!
//! The logit link replaces the squared error by the mean negative
//! log-likelihood. Columns are standardized internally (zero mean, unit
//! population variance); returned coefficients are on the original scale.

mod solver;
mod sparse;

use std::io::Write;

use log::debug;
use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use solver::{geometric_grid, lambda_max, solve_path, Settings, Solution};
use sparse::{ColumnMatrix, StdDesign};

pub use solver::sigmoid;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Link {
    Identity,
    Logit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlmConfig {
    pub l1_ratios: Vec<f64>,
    pub n_folds: usize,
    pub n_lambdas: usize,
    /// Path length for the logistic link; each point costs a full
    /// Newton solve.
    pub logistic_n_lambdas: usize,
    /// Smallest penalty on the path as a fraction of `lambda_max`.
    pub lambda_min_ratio: f64,
    pub tol: f64,
    pub max_sweeps: usize,
    pub seed: u64,
}

impl Default for GlmConfig {
    fn default() -> Self {
        Self {
            l1_ratios: vec![0.1, 0.5, 0.99],
            n_folds: 3,
            n_lambdas: 100,
            logistic_n_lambdas: 10,
            lambda_min_ratio: 1e-3,
            tol: 1e-7,
            max_sweeps: 10_000,
            seed: 0,
        }
    }
}

impl GlmConfig {
    fn settings(&self) -> Settings {
        Settings {
            tol: self.tol,
            max_sweeps: self.max_sweeps,
            max_newton: 100,
            separation_cap: 1e3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvEntry {
    pub l1_ratio: f64,
    pub lambda: f64,
    pub mean_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedGlm {
    pub link: Link,
    pub coefficients: Array1<f64>,
    pub intercept: f64,
    pub lambda: f64,
    pub l1_ratio: f64,
    pub cv_table: Vec<CvEntry>,
    /// Per-column `(mean, scale)`; scale 0 marks a dropped constant column.
    pub standardization: Vec<(f64, f64)>,
    pub converged: bool,
    /// Set when coefficients ran past the separation cap.
    pub separation: bool,
}

impl FittedGlm {
    /// Intercept-only model: the mean response on the link scale.
    pub fn intercept_only(link: Link, y: ArrayView1<f64>, n_columns: usize) -> Self {
        let ybar = y.mean().unwrap_or(0.0);
        let intercept = match link {
            Link::Identity => ybar,
            Link::Logit => {
                let p = ybar.clamp(1e-12, 1.0 - 1e-12);
                (p / (1.0 - p)).ln()
            }
        };
        Self {
            link,
            coefficients: Array1::zeros(n_columns),
            intercept,
            lambda: 0.0,
            l1_ratio: 1.0,
            cv_table: Vec::new(),
            standardization: vec![(0.0, 0.0); n_columns],
            converged: true,
            separation: false,
        }
    }

    pub fn n_columns(&self) -> usize {
        self.coefficients.len()
    }

    /// `Z b + b0` on the link scale.
    pub fn linear_predictor(&self, z: ArrayView2<f64>) -> Result<Array1<f64>> {
        glm_linear_predictor(self, z)
    }

    /// Largest violation of the optimality conditions at `(z, y)`, measured
    /// on the standardized scale the penalty is applied on. Excluded
    /// (constant) columns are skipped.
    pub fn kkt_residual(&self, z: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<f64> {
        let eta = self.linear_predictor(z)?;
        let n = y.len() as f64;
        let resid: Vec<f64> = eta
            .iter()
            .zip(y.iter())
            .map(|(&e, &yi)| match self.link {
                Link::Identity => yi - e,
                Link::Logit => yi - sigmoid(e),
            })
            .collect();
        let mut worst = (resid.iter().sum::<f64>() / n).abs();
        let threshold = self.lambda * self.l1_ratio;
        for (j, &(mean, scale)) in self.standardization.iter().enumerate() {
            if scale == 0.0 {
                continue;
            }
            let g = z
                .column(j)
                .iter()
                .zip(&resid)
                .map(|(x, r)| (x - mean) / scale * r)
                .sum::<f64>()
                / n;
            let b = self.coefficients[j] * scale;
            let v = if b == 0.0 {
                (g.abs() - threshold).max(0.0)
            } else {
                (g - self.lambda * (1.0 - self.l1_ratio) * b - threshold * b.signum()).abs()
            };
            worst = worst.max(v);
        }
        Ok(worst)
    }

    /// CV table as CSV: `l1_ratio,lambda,mean_loss`.
    pub fn write_cv_table<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["l1_ratio", "lambda", "mean_loss"])?;
        for e in &self.cv_table {
            w.write_record([
                crate::data::format_float(e.l1_ratio),
                crate::data::format_float(e.lambda),
                crate::data::format_float(e.mean_loss),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<cv table>", e))?;
        Ok(())
    }
}

pub fn glm_linear_predictor(glm: &FittedGlm, z: ArrayView2<f64>) -> Result<Array1<f64>> {
    if z.ncols() != glm.coefficients.len() {
        return Err(Error::DimensionMismatch {
            what: "basis columns",
            expected: glm.coefficients.len(),
            got: z.ncols(),
        });
    }
    Ok(z.dot(&glm.coefficients) + glm.intercept)
}

fn validate(z: ArrayView2<f64>, y: ArrayView1<f64>, n_folds: usize) -> Result<()> {
    if z.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            what: "response entries",
            expected: z.nrows(),
            got: y.len(),
        });
    }
    if n_folds < 2 {
        return Err(Error::InvalidParameter("need at least two folds".into()));
    }
    if y.len() < n_folds {
        return Err(Error::TooFewRows {
            needed: n_folds,
            got: y.len(),
        });
    }
    if let Some(row) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            row,
            column: "<response>".into(),
        });
    }
    for ((row, col), v) in z.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                row,
                column: format!("basis column {col}"),
            });
        }
    }
    Ok(())
}

fn assign_folds(y: ArrayView1<f64>, n_folds: usize, stratify: bool, seed: u64) -> Vec<usize> {
    let mut rng = rng_from_seed(seed);
    let n = y.len();
    let mut folds = vec![0usize; n];
    let groups: Vec<Vec<usize>> = if stratify {
        vec![
            (0..n).filter(|&i| y[i] == 0.0).collect(),
            (0..n).filter(|&i| y[i] != 0.0).collect(),
        ]
    } else {
        vec![(0..n).collect()]
    };
    let mut next = 0usize;
    for mut group in groups {
        group.shuffle(&mut rng);
        for i in group {
            folds[i] = next % n_folds;
            next += 1;
        }
    }
    folds
}

fn validation_loss(link: Link, x: &ColumnMatrix, y: &[f64], intercept: f64, coef: &[f64]) -> f64 {
    let eta = x.linear_predictor(intercept, coef);
    let n = y.len() as f64;
    match link {
        Link::Identity => eta.iter().zip(y).map(|(e, v)| (v - e).powi(2)).sum::<f64>() / n,
        Link::Logit => {
            eta.iter()
                .zip(y)
                .map(|(&e, &v)| {
                    let p = sigmoid(e).clamp(1e-15, 1.0 - 1e-15);
                    -(v * p.ln() + (1.0 - v) * (1.0 - p).ln())
                })
                .sum::<f64>()
                / n
        }
    }
}

fn to_fitted(
    link: Link,
    design: &StdDesign,
    sol: &Solution,
    alpha: f64,
    cv_table: Vec<CvEntry>,
) -> FittedGlm {
    let (intercept, coef) = design.destandardize(sol.b0, &sol.beta);
    FittedGlm {
        link,
        coefficients: Array1::from(coef),
        intercept,
        lambda: sol.lambda,
        l1_ratio: alpha,
        cv_table,
        standardization: design.mean.iter().copied().zip(design.scale.iter().copied()).collect(),
        converged: sol.converged,
        separation: sol.separated,
    }
}

fn finish(fitted: FittedGlm, sol: &Solution) -> Result<FittedGlm> {
    if !sol.converged && !sol.separated {
        return Err(Error::NotConverged {
            sweeps: sol.sweeps,
            achieved: sol.max_change,
        });
    }
    Ok(fitted)
}

fn fit_cv(z: ArrayView2<f64>, y: ArrayView1<f64>, link: Link, cfg: &GlmConfig) -> Result<FittedGlm> {
    validate(z, y, cfg.n_folds)?;
    if cfg.l1_ratios.is_empty() || cfg.l1_ratios.iter().any(|a| !(0.0..=1.0).contains(a)) {
        return Err(Error::InvalidParameter("l1 ratios must lie in [0, 1]".into()));
    }
    let n = y.len();
    let all: Vec<usize> = (0..n).collect();
    let ys: Vec<f64> = y.to_vec();
    let full = StdDesign::new(ColumnMatrix::from_rows(z, &all));
    let settings = cfg.settings();

    let grids: Vec<Vec<f64>> = cfg
        .l1_ratios
        .iter()
        .map(|&a| {
            let lmax = lambda_max(&full, &ys, a);
            let len = match link {
                Link::Identity => cfg.n_lambdas,
                Link::Logit => cfg.logistic_n_lambdas,
            };
            geometric_grid(lmax, cfg.lambda_min_ratio, len.max(1))
        })
        .collect();
    if grids.iter().all(|g| g[0] == 0.0) {
        // constant response or no usable column
        let mut glm = FittedGlm::intercept_only(link, y, z.ncols());
        glm.standardization = full.mean.iter().copied().zip(full.scale.iter().copied()).collect();
        return Ok(glm);
    }

    let folds = assign_folds(y, cfg.n_folds, link == Link::Logit, cfg.seed);
    let jobs: Vec<(usize, usize)> = (0..cfg.l1_ratios.len())
        .flat_map(|a| (0..cfg.n_folds).map(move |f| (a, f)))
        .collect();
    let losses: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(a, f)| {
            let train: Vec<usize> = (0..n).filter(|&i| folds[i] != f).collect();
            let valid: Vec<usize> = (0..n).filter(|&i| folds[i] == f).collect();
            let design = StdDesign::new(ColumnMatrix::from_rows(z, &train));
            let y_train: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let y_valid: Vec<f64> = valid.iter().map(|&i| y[i]).collect();
            let x_valid = ColumnMatrix::from_rows(z, &valid);
            solve_path(&design, &y_train, link, cfg.l1_ratios[a], &grids[a], &settings)
                .iter()
                .map(|sol| {
                    let (b0, coef) = design.destandardize(sol.b0, &sol.beta);
                    validation_loss(link, &x_valid, &y_valid, b0, &coef)
                })
                .collect()
        })
        .collect();

    let mut cv_table = Vec::new();
    // (mean loss, lambda, l1_ratio, ratio index, lambda index)
    let mut best: Option<(f64, f64, f64, usize, usize)> = None;
    for (a, &alpha) in cfg.l1_ratios.iter().enumerate() {
        for (k, &lambda) in grids[a].iter().enumerate() {
            let mean_loss = (0..cfg.n_folds)
                .map(|f| losses[a * cfg.n_folds + f][k])
                .sum::<f64>()
                / cfg.n_folds as f64;
            cv_table.push(CvEntry {
                l1_ratio: alpha,
                lambda,
                mean_loss,
            });
            let better = match best {
                None => true,
                Some((bl, blam, balpha, _, _)) => {
                    mean_loss < bl
                        || (mean_loss == bl && (lambda > blam || (lambda == blam && alpha > balpha)))
                }
            };
            if better {
                best = Some((mean_loss, lambda, alpha, a, k));
            }
        }
    }
    let (_, _, alpha, a, k) = best.expect("grid is non-empty");
    let path = solve_path(&full, &ys, link, alpha, &grids[a][..=k], &settings);
    debug!(
        "elastic net path: l1_ratio {alpha}, {} steps, active-set monotone fraction {:.3}",
        path.len(),
        solver::active_set_monotonicity(&path)
    );
    let sol = path.last().expect("path is non-empty");
    finish(to_fitted(link, &full, sol, alpha, cv_table), sol)
}

/// Elastic-net least squares with k-fold CV over `(lambda, l1_ratio)`.
pub fn fit_elastic_net(z: ArrayView2<f64>, y: ArrayView1<f64>, cfg: &GlmConfig) -> Result<FittedGlm> {
    fit_cv(z, y, Link::Identity, cfg)
}

/// Elastic-net logistic regression with stratified k-fold CV, selected by
/// mean validation log-loss.
pub fn fit_logistic_elastic_net(z: ArrayView2<f64>, y: ArrayView1<f64>, cfg: &GlmConfig) -> Result<FittedGlm> {
    if let Some(row) = y.iter().position(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::NonBinaryLabel { row, value: y[row] });
    }
    let positives = y.iter().filter(|&&v| v == 1.0).count();
    if positives == 0 || positives == y.len() {
        return Err(Error::SingleClass);
    }
    fit_cv(z, y, Link::Logit, cfg)
}

/// Fit at a fixed `(lambda, l1_ratio)`, warm-started along a short path
/// from `lambda_max`.
pub fn fit_penalized(
    z: ArrayView2<f64>,
    y: ArrayView1<f64>,
    link: Link,
    lambda: f64,
    l1_ratio: f64,
    cfg: &GlmConfig,
) -> Result<FittedGlm> {
    validate(z, y, 2)?;
    if link == Link::Logit {
        let positives = y.iter().filter(|&&v| v == 1.0).count();
        if positives == 0 || positives == y.len() {
            return Err(Error::SingleClass);
        }
    }
    let all: Vec<usize> = (0..y.len()).collect();
    let ys = y.to_vec();
    let design = StdDesign::new(ColumnMatrix::from_rows(z, &all));
    let lmax = lambda_max(&design, &ys, l1_ratio);
    let mut lambdas = if lambda < lmax {
        geometric_grid(lmax, lambda / lmax, 20)
    } else {
        Vec::new()
    };
    lambdas.retain(|&l| l > lambda);
    lambdas.push(lambda);
    let path = solve_path(&design, &ys, link, l1_ratio, &lambdas, &cfg.settings());
    let sol = path.last().expect("path is non-empty");
    finish(to_fitted(link, &design, sol, l1_ratio, Vec::new()), sol)
}

/// Smallest penalty at which all coefficients vanish, for the given data
/// and mixing.
pub fn lambda_max_for(z: ArrayView2<f64>, y: ArrayView1<f64>, l1_ratio: f64) -> f64 {
    let all: Vec<usize> = (0..y.len()).collect();
    let design = StdDesign::new(ColumnMatrix::from_rows(z, &all));
    lambda_max(&design, &y.to_vec(), l1_ratio)
}

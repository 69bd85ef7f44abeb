//! Synthetic and semi-synthetic benchmark data with known signal features.

use std::fmt;
use std::fs::File;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::seq::index::sample;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Task};
use crate::error::{Error, Result};
use crate::rng::child_rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dgp {
    /// `sum_m X_m`
    Linear,
    /// `sum_m X_{2m-1} + X_{2m-1} X_{2m}`
    PolyInteraction,
    /// `sum_m X_{2m-1} + 1(X_{2m-1} > 0) 1(X_{2m} > 0)`
    LinearLss,
}

impl Dgp {
    /// Number of signal features consumed by `terms` terms.
    pub fn required_features(self, terms: usize) -> usize {
        match self {
            Dgp::Linear => terms,
            Dgp::PolyInteraction | Dgp::LinearLss => 2 * terms,
        }
    }
}

impl fmt::Display for Dgp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dgp::Linear => "linear",
            Dgp::PolyInteraction => "poly-interaction",
            Dgp::LinearLss => "linear-lss",
        })
    }
}

impl FromStr for Dgp {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Dgp::Linear),
            "poly-interaction" | "poly" => Ok(Dgp::PolyInteraction),
            "linear-lss" | "lss" => Ok(Dgp::LinearLss),
            other => Err(Error::InvalidParameter(format!("unknown dgp `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub dgp: Dgp,
    pub task: Task,
    /// Columns playing X_1, X_2, ... in the response formulas.
    pub signal_features: Vec<usize>,
    /// Summands for `Linear`, pairs for the other two.
    pub n_terms: usize,
    pub pve: f64,
    pub flip_pct: f64,
    pub n: usize,
    pub seed: u64,
}

impl SynthSpec {
    /// Five terms over the first required columns.
    pub fn new(dgp: Dgp, task: Task, n: usize, seed: u64) -> Self {
        Self {
            dgp,
            task,
            signal_features: (0..dgp.required_features(5)).collect(),
            n_terms: 5,
            pve: 0.4,
            flip_pct: 0.0,
            n,
            seed,
        }
    }

    pub fn required_features(&self) -> usize {
        self.dgp.required_features(self.n_terms)
    }

    fn validate(&self, p: usize) -> Result<()> {
        let need = self.required_features();
        if self.n_terms == 0 || self.signal_features.len() < need {
            return Err(Error::InvalidParameter(format!(
                "{} with {} terms needs {need} signal features, got {}",
                self.dgp,
                self.n_terms,
                self.signal_features.len()
            )));
        }
        if let Some(&k) = self.signal_features.iter().find(|&&k| k >= p) {
            return Err(Error::OutOfRange { index: k, len: p });
        }
        match self.task {
            Task::Regression if !(self.pve > 0.0 && self.pve <= 1.0) => {
                Err(Error::InvalidParameter(format!("pve must lie in (0, 1], got {}", self.pve)))
            }
            Task::BinaryClassification if !(0.0..0.5).contains(&self.flip_pct) => Err(Error::InvalidParameter(
                format!("flip_pct must lie in [0, 0.5), got {}", self.flip_pct),
            )),
            _ => Ok(()),
        }
    }

    /// Indicator over `p` columns of the features the response depends on.
    pub fn signal_mask(&self, p: usize) -> Vec<bool> {
        let mut mask = vec![false; p];
        for &k in &self.signal_features[..self.required_features()] {
            mask[k] = true;
        }
        mask
    }
}

/// `E[Y|X]` for every row.
pub fn response_surface(x: ArrayView2<f64>, spec: &SynthSpec) -> Result<Array1<f64>> {
    spec.validate(x.ncols())?;
    let s = &spec.signal_features;
    let f = x
        .outer_iter()
        .map(|row| match spec.dgp {
            Dgp::Linear => (0..spec.n_terms).map(|m| row[s[m]]).sum(),
            Dgp::PolyInteraction => (0..spec.n_terms)
                .map(|m| {
                    let a = row[s[2 * m]];
                    a + a * row[s[2 * m + 1]]
                })
                .sum(),
            Dgp::LinearLss => (0..spec.n_terms)
                .map(|m| {
                    let a = row[s[2 * m]];
                    let b = row[s[2 * m + 1]];
                    a + if a > 0.0 && b > 0.0 { 1.0 } else { 0.0 }
                })
                .sum(),
        })
        .collect();
    Ok(f)
}

/// Sample variance with an `n - 1` denominator.
pub fn sample_variance(v: ArrayView1<f64>) -> f64 {
    let n = v.len() as f64;
    if v.len() < 2 {
        return 0.0;
    }
    let mean = v.sum() / n;
    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Noise standard deviation giving the requested proportion of variance
/// explained on this sample of `f`.
pub fn calibrate_noise(f: ArrayView1<f64>, pve: f64) -> Result<f64> {
    if !(pve > 0.0 && pve <= 1.0) {
        return Err(Error::InvalidParameter(format!("pve must lie in (0, 1], got {pve}")));
    }
    let var = sample_variance(f);
    if var <= 0.0 {
        return Err(Error::InvalidParameter("response surface is constant".into()));
    }
    Ok((var * (1.0 - pve) / pve).sqrt())
}

/// Bernoulli draws through the logistic link, then exactly
/// `round(flip_pct * n)` uniformly chosen labels inverted.
pub fn logistic_labels(f: ArrayView1<f64>, flip_pct: f64, seed: u64) -> Result<Array1<f64>> {
    if !(0.0..0.5).contains(&flip_pct) {
        return Err(Error::InvalidParameter(format!("flip_pct must lie in [0, 0.5), got {flip_pct}")));
    }
    let mut draw = child_rng(seed, 0);
    let mut y: Array1<f64> = f
        .iter()
        .map(|&v| {
            let p = 1.0 / (1.0 + (-v).exp());
            if draw.random::<f64>() < p {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let n_flip = (flip_pct * f.len() as f64).round() as usize;
    if n_flip > 0 {
        let mut flip = child_rng(seed, 1);
        for i in sample(&mut flip, f.len(), n_flip) {
            y[i] = 1.0 - y[i];
        }
    }
    Ok(y)
}

pub fn gaussian_x(n: usize, p: usize, seed: u64) -> Array2<f64> {
    let mut rng = child_rng(seed, 0);
    Array2::from_shape_fn((n, p), |_| StandardNormal.sample(&mut rng))
}

/// Rows from `N_p(0, Sigma)` where the first `block` features share
/// pairwise correlation `rho` and the rest are independent.
pub fn block_correlated_x(n: usize, p: usize, rho: f64, block: usize, seed: u64) -> Result<Array2<f64>> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::InvalidParameter(format!("rho must lie in [0, 1), got {rho}")));
    }
    if block > p {
        return Err(Error::InvalidParameter(format!("block {block} exceeds p = {p}")));
    }
    let sigma = DMatrix::from_fn(block, block, |i, j| if i == j { 1.0 } else { rho });
    let chol = sigma
        .cholesky()
        .ok_or_else(|| Error::InvalidParameter("correlation matrix is not positive definite".into()))?;
    let l = chol.l();
    let z = gaussian_x(n, p, seed);
    let mut x = z.clone();
    for i in 0..n {
        for a in 0..block {
            x[[i, a]] = (0..=a).map(|b| l[(a, b)] * z[[i, b]]).sum();
        }
    }
    Ok(x)
}

/// A generated dataset with its ground truth.
#[derive(Clone, Debug)]
pub struct Synthetic {
    pub dataset: Dataset,
    pub signal_mask: Vec<bool>,
    pub expected: Array1<f64>,
    pub noise_sd: f64,
}

/// Responses for covariates `x` under `spec`. Regression adds Gaussian noise
/// calibrated to `spec.pve`; classification draws logistic labels.
pub fn generate(x: Array2<f64>, spec: &SynthSpec) -> Result<Synthetic> {
    let f = response_surface(x.view(), spec)?;
    let (y, noise_sd) = match spec.task {
        Task::Regression => {
            let sigma = calibrate_noise(f.view(), spec.pve)?;
            let mut rng = child_rng(spec.seed, 2);
            let y = f.mapv(|v| {
                let e: f64 = StandardNormal.sample(&mut rng);
                v + sigma * e
            });
            (y, sigma)
        }
        Task::BinaryClassification => (logistic_labels(f.view(), spec.flip_pct, crate::rng::derive_seed(spec.seed, 3))?, 0.0),
    };
    let signal_mask = spec.signal_mask(x.ncols());
    let dataset = Dataset::from_arrays(x, y, spec.task)?;
    Ok(Synthetic {
        dataset,
        signal_mask,
        expected: f,
        noise_sd,
    })
}

/// Gaussian covariates (`spec.n` rows, `p` columns) with responses per `spec`.
pub fn gaussian_benchmark(spec: &SynthSpec, p: usize) -> Result<Synthetic> {
    generate(gaussian_x(spec.n, p, crate::rng::derive_seed(spec.seed, 1)), spec)
}

/// Keeps the covariates of `ds`, draws the signal columns at random and
/// replaces the response.
pub fn semisynthetic(ds: &Dataset, spec: &SynthSpec) -> Result<(Dataset, Vec<bool>)> {
    let need = spec.required_features();
    let p = ds.n_features();
    if need > p || spec.n_terms == 0 {
        return Err(Error::InvalidParameter(format!(
            "{} with {} terms needs {need} features, dataset has {p}",
            spec.dgp, spec.n_terms
        )));
    }
    let mut rng = child_rng(spec.seed, 1);
    let chosen = sample(&mut rng, p, need).into_vec();
    let spec = SynthSpec {
        signal_features: chosen,
        n: ds.n_rows(),
        ..spec.clone()
    };
    let out = generate(ds.features().clone(), &spec)?;
    let dataset = Dataset::new(
        out.dataset.features().clone(),
        out.dataset.response().clone(),
        spec.task,
        ds.feature_names().to_vec(),
    )?;
    Ok((dataset, out.signal_mask))
}

/// Feature groups of the correlated benchmark.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureGroups {
    pub signal: Vec<usize>,
    pub correlated: Vec<usize>,
    pub independent: Vec<usize>,
}

/// Correlated-block benchmark settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSpec {
    pub n: usize,
    pub p: usize,
    pub block: usize,
    pub n_signal: usize,
    pub rho: f64,
    pub pve: f64,
    pub seed: u64,
}

impl Default for CorrelationSpec {
    fn default() -> Self {
        Self {
            n: 250,
            p: 100,
            block: 50,
            n_signal: 6,
            rho: 0.99,
            pve: 0.1,
            seed: 0,
        }
    }
}

/// Linear + LSS pairs over the first `n_signal` features of a correlated
/// block. Groups: signal, non-signal inside the block, non-signal outside.
pub fn correlation_benchmark(cfg: &CorrelationSpec) -> Result<(Synthetic, FeatureGroups)> {
    if cfg.n_signal == 0 || cfg.n_signal % 2 != 0 || cfg.n_signal > cfg.block {
        return Err(Error::InvalidParameter(format!(
            "n_signal must be even, positive and within the block, got {}",
            cfg.n_signal
        )));
    }
    let x = block_correlated_x(cfg.n, cfg.p, cfg.rho, cfg.block, crate::rng::derive_seed(cfg.seed, 1))?;
    let spec = SynthSpec {
        dgp: Dgp::LinearLss,
        task: Task::Regression,
        signal_features: (0..cfg.n_signal).collect(),
        n_terms: cfg.n_signal / 2,
        pve: cfg.pve,
        flip_pct: 0.0,
        n: cfg.n,
        seed: cfg.seed,
    };
    let synth = generate(x, &spec)?;
    let groups = FeatureGroups {
        signal: (0..cfg.n_signal).collect(),
        correlated: (cfg.n_signal..cfg.block).collect(),
        independent: (cfg.block..cfg.p).collect(),
    };
    Ok((synth, groups))
}

pub const COUNTERFACTUAL_BETA: [f64; 10] = [5.0, 4.0, 3.0, 2.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0];

/// `y = 1(X beta + eps > 0)` with `x ~ N_10(0, I)` and Gaussian `eps`.
pub fn counterfactual_sim_with(n: usize, noise_sd: f64, seed: u64) -> Result<(Dataset, Vec<f64>)> {
    let beta = COUNTERFACTUAL_BETA.to_vec();
    let x = gaussian_x(n, beta.len(), crate::rng::derive_seed(seed, 1));
    let mut rng = child_rng(seed, 2);
    let y = x
        .outer_iter()
        .map(|row| {
            let e: f64 = StandardNormal.sample(&mut rng);
            let eta: f64 = row.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>() + noise_sd * e;
            if eta > 0.0 {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    Ok((Dataset::from_arrays(x, y, Task::BinaryClassification)?, beta))
}

/// 2000 rows, noise standard deviation 0.1.
pub fn counterfactual_sim(seed: u64) -> Result<(Dataset, Vec<f64>)> {
    counterfactual_sim_with(2000, 0.1, seed)
}

/// Signal mask as a JSON array of booleans.
pub fn write_mask(path: impl AsRef<Path>, mask: &[bool]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer(file, mask)?;
    Ok(())
}

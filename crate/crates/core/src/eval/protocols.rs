//! End-to-end benchmark protocols producing [`EvalReport`]s.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{train_test_split, Dataset, Task};
use crate::error::{Error, Result};
use crate::eval::cluster::{kmeans, subgroup_mse};
use crate::eval::counterfactual::knn_counterfactual;
use crate::eval::metrics::{group_ranks, signal_identification};
use crate::eval::report::{EvalReport, Record};
use crate::eval::retrain::{forest_score, mask_and_retrain, stability};
use crate::forest::{fit_forest, ForestModel, ForestParams};
use crate::glm::GlmConfig;
use crate::importance::{compute_lfi, fit_explainer, local_mdi, LfiMatrix, Method};
use crate::rng::derive_seed;
use crate::synth::{correlation_benchmark, counterfactual_sim_with, gaussian_benchmark, semisynthetic, CorrelationSpec, SynthSpec};

/// Settings shared by every protocol.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub methods: Vec<Method>,
    pub replicates: usize,
    pub seed: u64,
    pub train_fraction: f64,
    /// `None` picks the task's default forest.
    pub forest: Option<ForestParams>,
    pub glm: GlmConfig,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            methods: vec![Method::LmdiPlus, Method::LocalMdi],
            replicates: 1,
            seed: 0,
            train_fraction: 0.67,
            forest: None,
            glm: GlmConfig::default(),
        }
    }
}

impl ProtocolConfig {
    fn forest_for(&self, task: Task) -> ForestParams {
        self.forest.clone().unwrap_or_else(|| ForestParams::for_task(task))
    }

    fn replicate_seeds(&self) -> Vec<u64> {
        (0..self.replicates).map(|r| derive_seed(self.seed, r as u64)).collect()
    }

    fn check(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidParameter("replicates must be >= 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidParameter("no methods selected".into()));
        }
        Ok(())
    }
}

/// Per-replicate output before merging.
#[derive(Default)]
struct Partial {
    records: Vec<Record>,
    timings: Vec<(String, f64)>,
}

impl Partial {
    fn push(&mut self, method: &str, setting: impl Into<String>, replicate: usize, value: f64) {
        self.records.push(Record {
            method: method.to_string(),
            setting: setting.into(),
            replicate,
            value,
        });
    }

    fn timed<T>(&mut self, phase: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f()?;
        self.timings.push((phase.to_string(), start.elapsed().as_secs_f64()));
        Ok(out)
    }
}

fn run_replicates(
    protocol: &str,
    cfg: &ProtocolConfig,
    body: impl Fn(usize, u64) -> Result<Partial> + Sync,
) -> Result<EvalReport> {
    cfg.check()?;
    let seeds = cfg.replicate_seeds();
    let parts = seeds
        .par_iter()
        .enumerate()
        .map(|(r, &s)| body(r, s))
        .collect::<Result<Vec<_>>>()?;
    let mut report = EvalReport::new(protocol);
    report.replicates = cfg.replicates;
    report.seeds = seeds;
    for part in parts {
        report.records.extend(part.records);
        for (phase, secs) in part.timings {
            report.add_time(&phase, secs);
        }
    }
    Ok(report)
}

/// Scores every method once, sharing the fitted forest.
fn score_methods(
    part: &mut Partial,
    methods: &[Method],
    forest: &ForestModel,
    train: &Dataset,
    x: ndarray::ArrayView2<f64>,
    glm: &GlmConfig,
) -> Result<Vec<LfiMatrix>> {
    methods
        .iter()
        .map(|&m| part.timed(&format!("lfi:{m}"), || compute_lfi(m, forest, train, x, glm)))
        .collect()
}

/// Signal identification: synthetic responses (on Gaussian covariates, or on
/// `covariates` when given), forest on the training split, mean per-sample
/// AUROC of each method's test-row scores against the signal mask.
pub fn signal_benchmark(
    spec: &SynthSpec,
    p: usize,
    covariates: Option<&Dataset>,
    cfg: &ProtocolConfig,
) -> Result<EvalReport> {
    let setting = match spec.task {
        Task::Regression => format!("{}:pve={}", spec.dgp, spec.pve),
        Task::BinaryClassification => format!("{}:flip={}", spec.dgp, spec.flip_pct),
    };
    let params = cfg.forest_for(spec.task);
    run_replicates("bench-synthetic", cfg, |r, seed| {
        let mut part = Partial::default();
        let spec = SynthSpec { seed, ..spec.clone() };
        let (ds, mask) = match covariates {
            Some(base) => semisynthetic(base, &spec)?,
            None => {
                let out = gaussian_benchmark(&spec, p)?;
                (out.dataset, out.signal_mask)
            }
        };
        let split = train_test_split(&ds, cfg.train_fraction, seed)?;
        let forest = part.timed("fit_forest", || fit_forest(&split.train, &params, seed))?;
        let lfis = score_methods(&mut part, &cfg.methods, &forest, &split.train, split.test.features().view(), &cfg.glm)?;
        for lfi in &lfis {
            part.push(lfi.method.name(), setting.clone(), r, signal_identification(lfi, &mask)?);
        }
        Ok(part)
    })
}

/// Correlated-block benchmark: mean rank of the signal, correlated and
/// independent groups on the test rows.
pub fn correlation_protocol(spec: &CorrelationSpec, cfg: &ProtocolConfig) -> Result<EvalReport> {
    let params = cfg.forest_for(Task::Regression);
    run_replicates("bench-correlation", cfg, |r, seed| {
        let mut part = Partial::default();
        let (synth, groups) = correlation_benchmark(&CorrelationSpec { seed, ..spec.clone() })?;
        let split = train_test_split(&synth.dataset, cfg.train_fraction, seed)?;
        let forest = part.timed("fit_forest", || fit_forest(&split.train, &params, seed))?;
        let lfis = score_methods(&mut part, &cfg.methods, &forest, &split.train, split.test.features().view(), &cfg.glm)?;
        let group_list = [groups.signal.clone(), groups.correlated.clone(), groups.independent.clone()];
        for lfi in &lfis {
            let ranks = group_ranks(lfi, &group_list)?;
            for (name, v) in ["signal", "correlated", "independent"].iter().zip(ranks) {
                part.push(lfi.method.name(), format!("rho={}:{name}", spec.rho), r, v);
            }
        }
        Ok(part)
    })
}

/// Remove-and-retrain: training-row scores pick each row's top features,
/// the rest are mean-imputed, a fresh forest is scored on the test split.
pub fn selection_protocol(ds: &Dataset, keep_pcts: &[f64], cfg: &ProtocolConfig) -> Result<EvalReport> {
    let params = cfg.forest_for(ds.task());
    run_replicates("bench-select", cfg, |r, seed| {
        let mut part = Partial::default();
        let split = train_test_split(ds, cfg.train_fraction, seed)?;
        let retrain_seed = derive_seed(seed, 1);
        let base = part.timed("retrain", || forest_score(&split.train, &split.test, &params, retrain_seed))?;
        part.push("baseline", "keep=1", r, base);
        let forest = part.timed("fit_forest", || fit_forest(&split.train, &params, seed))?;
        let lfis = score_methods(&mut part, &cfg.methods, &forest, &split.train, split.train.features().view(), &cfg.glm)?;
        for lfi in &lfis {
            for &keep in keep_pcts {
                let score = part.timed("retrain", || {
                    mask_and_retrain(&split.train, &split.test, lfi, keep, &params, retrain_seed)
                })?;
                part.push(lfi.method.name(), format!("keep={keep}"), r, score);
            }
        }
        Ok(part)
    })
}

/// Cross-seed stability of per-row top sets; `n_fits` model seeds per
/// replicate, all trained on the full dataset.
pub fn stability_protocol(ds: &Dataset, keep_pct: f64, n_fits: usize, cfg: &ProtocolConfig) -> Result<EvalReport> {
    let params = cfg.forest_for(ds.task());
    run_replicates("stability", cfg, |r, seed| {
        let mut part = Partial::default();
        let seeds: Vec<u64> = (0..n_fits as u64).map(|j| derive_seed(seed, j)).collect();
        for &m in &cfg.methods {
            let v = part.timed(&format!("lfi:{m}"), || stability(ds, m, keep_pct, &seeds, &params, &cfg.glm))?;
            part.push(m.name(), format!("keep={keep_pct}:fits={n_fits}"), r, v);
        }
        Ok(part)
    })
}

/// Counterfactual matching. Without `ds` the simulated 10-feature problem
/// is drawn afresh per replicate. Records mean `|dx_k|` per feature
/// (settings `dx1`, `dx2`, ...) and the mean l1 distance (`l1`); method
/// `raw` matches on the covariates themselves.
pub fn counterfactual_protocol(
    ds: Option<&Dataset>,
    noise_sd: f64,
    standardize: bool,
    cfg: &ProtocolConfig,
) -> Result<EvalReport> {
    if let Some(d) = ds {
        if d.task() != Task::BinaryClassification {
            return Err(Error::InvalidParameter("counterfactuals need a classification dataset".into()));
        }
    }
    let params = cfg.forest_for(Task::BinaryClassification);
    run_replicates("counterfactual", cfg, |r, seed| {
        let mut part = Partial::default();
        let data = match ds {
            Some(d) => d.clone(),
            None => counterfactual_sim_with(2000, noise_sd, seed)?.0,
        };
        let split = train_test_split(&data, 0.5, seed)?;
        let forest = part.timed("fit_forest", || fit_forest(&split.train, &params, seed))?;
        let label = |p: Vec<f64>| p.into_iter().map(|v| if v > 0.5 { 1.0 } else { 0.0 }).collect::<Vec<_>>();
        let train_pred = label(forest.predict(split.train.features().view())?);
        let test_pred = label(forest.predict(split.test.features().view())?);
        let train_x = split.train.features().view();
        let test_x = split.test.features().view();

        let record = |part: &mut Partial, name: &str, tr: ndarray::ArrayView2<f64>, te: ndarray::ArrayView2<f64>| {
            let m = knn_counterfactual(tr, &train_pred, train_x, te, &test_pred, test_x, standardize)?;
            for (k, v) in m.mean_abs_diff.iter().enumerate() {
                part.push(name, format!("dx{}", k + 1), r, *v);
            }
            part.push(name, "l1", r, m.mean_l1);
            Ok::<_, Error>(())
        };
        record(&mut part, "raw", train_x, test_x)?;
        for &m in &cfg.methods {
            let (tr, te) = part.timed(&format!("lfi:{m}"), || match m {
                Method::LmdiPlus => {
                    let ex = fit_explainer(&forest, &split.train, &cfg.glm)?;
                    Ok((ex.lmdi_plus(train_x)?, ex.lmdi_plus(test_x)?))
                }
                Method::LocalMdi => Ok((local_mdi(&forest, train_x)?, local_mdi(&forest, test_x)?)),
                Method::Mdi => Ok((
                    compute_lfi(m, &forest, &split.train, train_x, &cfg.glm)?,
                    compute_lfi(m, &forest, &split.train, test_x, &cfg.glm)?,
                )),
            })?;
            record(&mut part, m.name(), tr.scores.view(), te.scores.view())?;
        }
        Ok(part)
    })
}

/// Subgroup discovery: forest on the training half, k-means on each
/// method's test-row scores, per-cluster OLS on the test rows. Records the
/// aggregate in-sample MSE per `k`, plus `global-ols`.
pub fn cluster_protocol(ds: &Dataset, max_k: usize, cfg: &ProtocolConfig) -> Result<EvalReport> {
    if ds.task() != Task::Regression {
        return Err(Error::InvalidParameter("subgroup discovery needs a regression dataset".into()));
    }
    if max_k < 2 {
        return Err(Error::InvalidParameter("k-clusters must be >= 2".into()));
    }
    let params = cfg.forest_for(Task::Regression);
    run_replicates("cluster", cfg, |r, seed| {
        let mut part = Partial::default();
        let split = train_test_split(ds, 0.5, seed)?;
        let forest = part.timed("fit_forest", || fit_forest(&split.train, &params, seed))?;
        let lfis = score_methods(&mut part, &cfg.methods, &forest, &split.train, split.test.features().view(), &cfg.glm)?;
        let global = subgroup_mse(&split.test, &vec![0; split.test.n_rows()])?;
        part.push("global-ols", "k=1", r, global.global_mse);
        for lfi in &lfis {
            for k in 2..=max_k.min(split.test.n_rows()) {
                let km = part.timed("kmeans", || kmeans(lfi.scores.view(), k, derive_seed(seed, k as u64), 300))?;
                let res = subgroup_mse(&split.test, &km.labels)?;
                part.push(lfi.method.name(), format!("k={k}"), r, res.aggregate_mse);
            }
        }
        Ok(part)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{Dgp, gaussian_x};

    fn quick() -> ProtocolConfig {
        ProtocolConfig {
            replicates: 2,
            forest: Some(ForestParams { n_estimators: 5, ..ForestParams::regression() }),
            glm: GlmConfig { n_lambdas: 10, ..GlmConfig::default() },
            ..ProtocolConfig::default()
        }
    }

    #[test]
    fn signal_benchmark_shape_and_determinism() {
        let spec = SynthSpec::new(Dgp::Linear, Task::Regression, 120, 0);
        let a = signal_benchmark(&spec, 10, None, &quick()).unwrap();
        assert_eq!(a.records.len(), 4);
        assert!(a.records.iter().all(|r| (0.0..=1.0).contains(&r.value)));
        let b = signal_benchmark(&spec, 10, None, &quick()).unwrap();
        assert_eq!(a.records, b.records);
    }

    #[test]
    fn correlation_protocol_has_three_groups_per_method() {
        let spec = CorrelationSpec { n: 80, p: 20, block: 10, ..CorrelationSpec::default() };
        let cfg = ProtocolConfig { replicates: 1, ..quick() };
        let rep = correlation_protocol(&spec, &cfg).unwrap();
        assert_eq!(rep.summary().len(), 6);
    }

    #[test]
    fn selection_and_stability_run() {
        let x = gaussian_x(90, 5, 2);
        let y = x.column(0).to_owned() * 3.0;
        let ds = Dataset::from_arrays(x, y, Task::Regression).unwrap();
        let rep = selection_protocol(&ds, &[0.2, 1.0], &quick()).unwrap();
        for r in 0..2 {
            let base = rep.records.iter().find(|x| x.method == "baseline" && x.replicate == r).unwrap().value;
            for m in ["lmdi-plus", "local-mdi"] {
                let full = rep.records.iter().find(|x| x.method == m && x.setting == "keep=1" && x.replicate == r).unwrap();
                assert_eq!(full.value.to_bits(), base.to_bits());
            }
        }
        let st = stability_protocol(&ds, 0.2, 2, &ProtocolConfig { replicates: 1, ..quick() }).unwrap();
        assert!(st.records.iter().all(|r| r.value >= 0.2 - 1e-12 && r.value <= 0.4 + 1e-12));
    }

    #[test]
    fn counterfactual_and_cluster_run() {
        let cfg = ProtocolConfig {
            replicates: 1,
            methods: vec![Method::LocalMdi],
            forest: Some(ForestParams { n_estimators: 5, ..ForestParams::classification() }),
            ..quick()
        };
        let rep = counterfactual_protocol(None, 0.1, false, &cfg).unwrap();
        assert_eq!(rep.records.len(), 22);

        let x = gaussian_x(80, 3, 4);
        let y = x.column(0).mapv(|v| v.abs());
        let ds = Dataset::from_arrays(x, y, Task::Regression).unwrap();
        let cfg = ProtocolConfig { forest: Some(ForestParams { n_estimators: 5, ..ForestParams::regression() }), ..cfg };
        let rep = cluster_protocol(&ds, 3, &cfg).unwrap();
        assert_eq!(rep.records.len(), 3);
        assert!(cluster_protocol(&ds, 1, &cfg).is_err());
    }
}

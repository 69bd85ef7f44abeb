use lmdi_core::data::{Dataset, Task};
use lmdi_core::forest::{fit_forest, ForestParams};
use lmdi_core::glm::GlmConfig;
use lmdi_core::importance::{fit_explainer, local_mdi, mdi_tree};
use lmdi_core::synth::gaussian_x;
use lmdi_core::tree::MaxFeatures;
use ndarray::{Array1, Axis};
use proptest::prelude::*;

fn data(n: usize, p: usize, seed: u64, task: Task) -> Dataset {
    let x = gaussian_x(n, p, seed);
    let f = x.column(0).to_owned() - x.column(p - 1).mapv(|v| v * v) * 0.5;
    let y = match task {
        Task::Regression => f,
        Task::BinaryClassification => {
            let mut y = f.mapv(|v| f64::from(u8::from(v > 0.0)));
            // keep both classes present in every draw
            y[0] = 0.0;
            y[1] = 1.0;
            y
        }
    };
    Dataset::from_arrays(x, y, task).unwrap()
}

fn quick_glm(seed: u64) -> GlmConfig {
    GlmConfig {
        n_lambdas: 15,
        logistic_n_lambdas: 5,
        seed,
        ..GlmConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn local_mdi_averages_back_to_mdi(n in 20usize..80, p in 1usize..6, seed in any::<u64>(), regression in any::<bool>()) {
        let task = if regression { Task::Regression } else { Task::BinaryClassification };
        let ds = data(n, p, seed, task);
        let params = ForestParams { n_estimators: 4, max_features: MaxFeatures::All, ..ForestParams::for_task(task) };
        let forest = fit_forest(&ds, &params, seed).unwrap();
        for (tree, counts) in forest.trees().iter().zip(forest.in_bag_counts()) {
            let single = lmdi_core::ForestModel::from_parts(
                vec![tree.clone()], vec![counts.clone()], params.clone(), 0, task, n, p,
            ).unwrap();
            let local = local_mdi(&single, ds.features().view()).unwrap();
            let w = Array1::from_iter(counts.iter().map(|&c| c as f64));
            let avg = local.scores.t().dot(&w) / w.sum();
            for (a, b) in avg.iter().zip(mdi_tree(tree)) {
                prop_assert!((a - b).abs() <= 1e-10, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn lmdi_plus_is_additive_and_averages_trees(n in 30usize..70, p in 2usize..5, seed in any::<u64>(), regression in any::<bool>()) {
        let task = if regression { Task::Regression } else { Task::BinaryClassification };
        let ds = data(n, p, seed, task);
        let params = ForestParams { n_estimators: 3, ..ForestParams::for_task(task) };
        let forest = fit_forest(&ds, &params, seed).unwrap();
        let explainer = fit_explainer(&forest, &ds, &quick_glm(seed)).unwrap();
        let x = ds.features();
        let lfi = explainer.lmdi_plus(x.view()).unwrap();
        let mut mean = Array1::<f64>::zeros(p);
        for i in 0..n.min(10) {
            mean.fill(0.0);
            for t in 0..forest.n_trees() {
                let parts = explainer.lmdi_plus_tree(t, x.row(i)).unwrap();
                let z = explainer.basis_row(t, x.row(i)).unwrap();
                let glm = &explainer.glms()[t];
                let eta = glm.linear_predictor(z.view().insert_axis(Axis(0))).unwrap()[0];
                let total: f64 = parts.iter().sum::<f64>() + glm.intercept;
                prop_assert!((total - eta).abs() <= 1e-10 * eta.abs().max(1.0));
                for (k, v) in parts.iter().enumerate() {
                    if forest.trees()[t].splits_on(k).is_empty() {
                        prop_assert_eq!(*v, 0.0);
                    }
                    mean[k] += v / forest.n_trees() as f64;
                }
            }
            for k in 0..p {
                prop_assert!((lfi.scores[[i, k]] - mean[k]).abs() <= 1e-12 * mean[k].abs().max(1.0));
            }
        }
    }
}

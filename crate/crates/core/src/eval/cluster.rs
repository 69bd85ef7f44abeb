use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::least_squares;
use crate::rng::rng_from_seed;

#[derive(Clone, Debug, Serialize)]
pub struct KMeans {
    pub labels: Vec<usize>,
    pub centers: Array2<f64>,
    /// Inertia after each assignment step.
    pub inertia: Vec<f64>,
    pub iterations: usize,
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn plus_plus(points: ArrayView2<f64>, k: usize, seed: u64) -> Array2<f64> {
    let n = points.nrows();
    let mut rng = rng_from_seed(seed);
    let mut centers = Array2::zeros((k, points.ncols()));
    centers.row_mut(0).assign(&points.row(rng.random_range(0..n)));
    let mut d2: Vec<f64> = points.outer_iter().map(|r| sq_dist(r, centers.row(0))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > target {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.row_mut(c).assign(&points.row(pick));
        for (i, r) in points.outer_iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(r, centers.row(c)));
        }
    }
    centers
}

fn assign(points: ArrayView2<f64>, centers: &Array2<f64>, labels: &mut [usize]) -> (bool, f64) {
    let mut changed = false;
    let mut inertia = 0.0;
    for (i, r) in points.outer_iter().enumerate() {
        let mut best = (f64::INFINITY, 0);
        for (c, center) in centers.outer_iter().enumerate() {
            let d = sq_dist(r, center);
            if d < best.0 {
                best = (d, c);
            }
        }
        if labels[i] != best.1 {
            labels[i] = best.1;
            changed = true;
        }
        inertia += best.0;
    }
    (changed, inertia)
}

/// k-means++ seeding followed by Lloyd iterations until the assignment stops
/// changing or `max_iter` is hit. An empty cluster takes over the point
/// farthest from its current center.
pub fn kmeans(points: ArrayView2<f64>, k: usize, seed: u64, max_iter: usize) -> Result<KMeans> {
    let n = points.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!("k = {k} must lie in 1..={n}")));
    }
    let mut centers = plus_plus(points, k, seed);
    let mut labels = vec![usize::MAX; n];
    let mut inertia = Vec::new();
    let mut iterations = 0;
    loop {
        let (changed, cost) = assign(points, &centers, &mut labels);
        inertia.push(cost);
        if !changed || iterations >= max_iter {
            break;
        }
        iterations += 1;
        let mut sums = Array2::<f64>::zeros(centers.dim());
        let mut counts = vec![0usize; k];
        for (i, r) in points.outer_iter().enumerate() {
            sums.row_mut(labels[i]).scaled_add(1.0, &r);
            counts[labels[i]] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers.row_mut(c).assign(&(&sums.row(c) / counts[c] as f64));
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..n)
                    .map(|i| (sq_dist(points.row(i), centers.row(labels[i])), i))
                    .fold((-1.0, 0), |a, b| if b.0 > a.0 { b } else { a })
                    .1;
                counts[labels[far]] -= 1;
                labels[far] = c;
                counts[c] = 1;
                centers.row_mut(c).assign(&points.row(far));
            }
        }
    }
    Ok(KMeans {
        labels,
        centers,
        inertia,
        iterations,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SubgroupMse {
    /// In-sample MSE over all rows with one OLS per cluster.
    pub aggregate_mse: f64,
    /// In-sample MSE of one OLS on every row.
    pub global_mse: f64,
    /// Clusters too small for OLS, predicted by their mean.
    pub mean_fallback: Vec<usize>,
    /// Clusters whose design was rank deficient (minimum-norm fit).
    pub rank_deficient: Vec<usize>,
}

/// Per-cluster OLS of `y` on the raw features against one global OLS.
pub fn subgroup_mse(ds: &Dataset, labels: &[usize]) -> Result<SubgroupMse> {
    let n = ds.n_rows();
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            what: "cluster labels",
            expected: n,
            got: labels.len(),
        });
    }
    let x = ds.features();
    let y = ds.response();
    let p = ds.n_features();
    let global = least_squares(x.view(), y.view())?;
    let global_mse = (&global.fitted - y).mapv(|v| v * v).sum() / n as f64;

    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut sse = 0.0;
    let mut mean_fallback = Vec::new();
    let mut rank_deficient = Vec::new();
    for c in 0..k {
        let rows: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
        if rows.is_empty() {
            continue;
        }
        let yc: Array1<f64> = y.select(Axis(0), &rows);
        if rows.len() <= p + 1 {
            let m = yc.mean().unwrap_or(0.0);
            sse += yc.iter().map(|v| (v - m).powi(2)).sum::<f64>();
            mean_fallback.push(c);
            continue;
        }
        let xc = x.select(Axis(0), &rows);
        let fit = least_squares(xc.view(), yc.view())?;
        if fit.rank_deficient {
            rank_deficient.push(c);
        }
        sse += (&fit.fitted - &yc).mapv(|v| v * v).sum();
    }
    Ok(SubgroupMse {
        aggregate_mse: sse / n as f64,
        global_mse,
        mean_fallback,
        rank_deficient,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Task;
    use crate::synth::gaussian_x;
    use ndarray::{array, s};

    fn blobs() -> Array2<f64> {
        let mut x = gaussian_x(40, 2, 1) * 0.1;
        x.slice_mut(s![20.., ..]).mapv_inplace(|v| v + 10.0);
        x
    }

    #[test]
    fn separates_blobs() {
        let x = blobs();
        let km = kmeans(x.view(), 2, 3, 100).unwrap();
        let a = km.labels[0];
        assert!(km.labels[..20].iter().all(|&l| l == a));
        assert!(km.labels[20..].iter().all(|&l| l != a));
        assert_eq!(kmeans(x.view(), 2, 3, 100).unwrap().labels, km.labels);
    }

    #[test]
    fn single_cluster_center_is_mean() {
        let x = gaussian_x(30, 3, 2);
        let km = kmeans(x.view(), 1, 0, 10).unwrap();
        let mean = x.mean_axis(Axis(0)).unwrap();
        for (a, b) in km.centers.row(0).iter().zip(mean.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(kmeans(x.view(), 31, 0, 10).is_err());
        assert!(kmeans(x.view(), 0, 0, 10).is_err());
    }

    #[test]
    fn inertia_never_increases() {
        for seed in 0..10 {
            let x = gaussian_x(200, 4, seed);
            let km = kmeans(x.view(), 6, seed, 300).unwrap();
            for w in km.inertia.windows(2) {
                assert!(w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0));
            }
        }
    }

    #[test]
    fn piecewise_linear_clusters() {
        let x = Array1::linspace(-2.0, 2.0, 40);
        let labels: Vec<usize> = (0..40).map(|i| usize::from(i >= 20)).collect();
        let y = Array1::from_shape_fn(40, |i| if labels[i] == 0 { x[i] } else { -x[i] });
        let ds = Dataset::from_arrays(x.insert_axis(Axis(1)), y, Task::Regression).unwrap();
        let res = subgroup_mse(&ds, &labels).unwrap();
        assert!(res.aggregate_mse < 1e-20);
        assert!(res.global_mse > 0.1);
        let one = subgroup_mse(&ds, &[0; 40]).unwrap();
        assert!((one.aggregate_mse - one.global_mse).abs() < 1e-12);
    }

    #[test]
    fn refinement_does_not_increase_mse() {
        let x = gaussian_x(90, 2, 5);
        let y = x.column(0).mapv(|v| v.powi(2));
        let ds = Dataset::from_arrays(x, y, Task::Regression).unwrap();
        let coarse: Vec<usize> = (0..90).map(|i| i % 2).collect();
        let fine: Vec<usize> = (0..90).map(|i| i % 2 + 2 * usize::from(i >= 45)).collect();
        let a = subgroup_mse(&ds, &coarse).unwrap().aggregate_mse;
        let b = subgroup_mse(&ds, &fine).unwrap().aggregate_mse;
        assert!(b <= a + 1e-12);
    }

    #[test]
    fn tiny_cluster_falls_back_to_mean() {
        let x = array![[0.0], [1.0], [2.0], [3.0], [4.0], [5.0], [6.0]];
        let y = array![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 9.0];
        let ds = Dataset::from_arrays(x, y, Task::Regression).unwrap();
        let res = subgroup_mse(&ds, &[0, 0, 0, 0, 0, 0, 1]).unwrap();
        assert_eq!(res.mean_fallback, vec![1]);
        assert!(res.aggregate_mse < 1e-20);
    }
}

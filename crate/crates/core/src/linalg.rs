//! Dense least squares via a complete orthogonal decomposition.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct LeastSquares {
    pub intercept: f64,
    pub coefficients: Array1<f64>,
    /// Fitted values at the training rows.
    pub fitted: Array1<f64>,
    /// Numerical rank of the design including the intercept column.
    pub rank: usize,
    /// True when the design (with intercept) is rank deficient, in which
    /// case the minimum-norm solution is returned.
    pub rank_deficient: bool,
}

/// Weighted OLS of `y` on `[1, x]` with row weights `w`; minimum-norm
/// solution when the design is rank deficient.
pub fn weighted_least_squares(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    w: Option<ArrayView1<f64>>,
) -> Result<LeastSquares> {
    let (n, p) = x.dim();
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            what: "response entries",
            expected: n,
            got: y.len(),
        });
    }
    let weight = |i: usize| w.map(|w| w[i]).unwrap_or(1.0);
    let a = DMatrix::from_fn(n, p + 1, |i, j| {
        let sw = weight(i).sqrt();
        if j == 0 {
            sw
        } else {
            sw * x[[i, j - 1]]
        }
    });
    let b = DVector::from_fn(n, |i, _| weight(i).sqrt() * y[i]);
    let (sol, rank) = min_norm_solve(a, &b);
    let intercept = sol[0];
    let coefficients = Array1::from_iter(sol.iter().skip(1).copied());
    let fitted = Array1::from_shape_fn(n, |i| {
        intercept + (0..p).map(|j| x[[i, j]] * coefficients[j]).sum::<f64>()
    });
    Ok(LeastSquares {
        intercept,
        coefficients,
        fitted,
        rank,
        rank_deficient: rank < p + 1,
    })
}

/// Minimum-norm solution of `min ||a x - b||` and the numerical rank.
///
/// Column-pivoted QR gives `a P = Q [R11 R12]` with `R11` of full rank `r`;
/// a second QR of `[R11 R12]^T = Z T` then yields `x = P Z T^-T Q_r^T b`.
fn min_norm_solve(a: DMatrix<f64>, b: &DVector<f64>) -> (DVector<f64>, usize) {
    let (n, m) = a.shape();
    let k = n.min(m);
    if k == 0 {
        return (DVector::zeros(m), 0);
    }
    let qr = a.col_piv_qr();
    let r = qr.r();
    let tol = r[(0, 0)].abs() * n.max(m) as f64 * f64::EPSILON;
    let rank = (0..k).take_while(|&i| r[(i, i)].abs() > tol).count();
    if rank == 0 {
        return (DVector::zeros(m), 0);
    }
    let c = qr.q().columns(0, rank).tr_mul(b);
    let lead = r.rows(0, rank);
    let mut x = if rank == m {
        lead.solve_upper_triangular(&c).expect("nonzero pivots")
    } else {
        let z = lead.transpose().qr();
        let u = z.r().tr_solve_upper_triangular(&c).expect("nonzero pivots");
        z.q() * u
    };
    qr.p().inv_permute_rows(&mut x);
    (x, rank)
}

pub fn least_squares(x: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<LeastSquares> {
    weighted_least_squares(x, y, None)
}

/// Weighted coefficient of determination.
pub fn r_squared(y: ArrayView1<f64>, fitted: ArrayView1<f64>, w: Option<ArrayView1<f64>>) -> f64 {
    let weight = |i: usize| w.map(|w| w[i]).unwrap_or(1.0);
    let total_w: f64 = (0..y.len()).map(weight).sum();
    let mean = (0..y.len()).map(|i| weight(i) * y[i]).sum::<f64>() / total_w;
    let sst: f64 = (0..y.len()).map(|i| weight(i) * (y[i] - mean).powi(2)).sum();
    let sse: f64 = (0..y.len()).map(|i| weight(i) * (y[i] - fitted[i]).powi(2)).sum();
    1.0 - sse / sst
}

pub fn mean_squared_error(y: ArrayView1<f64>, pred: ArrayView1<f64>) -> f64 {
    y.iter().zip(pred.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn exact_line() {
        let x = array![[0.0], [1.0], [2.0], [3.0]];
        let y = array![1.0, 3.0, 5.0, 7.0];
        let fit = least_squares(x.view(), y.view()).unwrap();
        assert!((fit.intercept - 1.0).abs() < 1e-12);
        assert!((fit.coefficients[0] - 2.0).abs() < 1e-12);
        assert!(!fit.rank_deficient);
        assert!((r_squared(y.view(), fit.fitted.view(), None) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn duplicated_column_gives_min_norm_split() {
        let x = array![[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]];
        let y = array![0.0, 2.0, 4.0];
        let fit = least_squares(x.view(), y.view()).unwrap();
        assert!(fit.rank_deficient);
        assert!((fit.coefficients[0] - 1.0).abs() < 1e-10);
        assert!((fit.coefficients[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn weights_act_like_duplicates() {
        let x = array![[0.0], [1.0], [2.0]];
        let y = array![0.0, 1.0, 5.0];
        let w = array![1.0, 2.0, 1.0];
        let weighted = weighted_least_squares(x.view(), y.view(), Some(w.view())).unwrap();
        let xd = array![[0.0], [1.0], [1.0], [2.0]];
        let yd = array![0.0, 1.0, 1.0, 5.0];
        let dup = least_squares(xd.view(), yd.view()).unwrap();
        assert!((weighted.coefficients[0] - dup.coefficients[0]).abs() < 1e-12);
        assert!((weighted.intercept - dup.intercept).abs() < 1e-12);
    }

    /// `a^T (b - a x)` and the distance of `x` from the row space of `a`.
    fn optimality(x: &Array2<f64>, y: &Array1<f64>, fit: &LeastSquares) -> (f64, f64) {
        let n = x.nrows();
        let a = ndarray::concatenate(ndarray::Axis(1), &[Array2::ones((n, 1)).view(), x.view()]).unwrap();
        let mut sol = vec![fit.intercept];
        sol.extend(fit.coefficients.iter());
        let sol = Array1::from(sol);
        let grad = a.t().dot(&(y - &a.dot(&sol)));
        // project sol onto the row space with a ridge-free normal solve on a a^T
        let am = DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]]);
        let z = (&am * am.transpose()).pseudo_inverse(1e-9).unwrap() * &am * DVector::from_vec(sol.to_vec());
        let back = am.transpose() * z;
        let off = sol.iter().zip(back.iter()).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
        (grad.iter().map(|g| g.abs()).fold(0.0, f64::max), off)
    }

    #[test]
    fn repeated_singular_values_are_solved_accurately() {
        // orthogonal columns of equal norm, plus rows with zero weight
        let h = array![
            [1.0, 1.0, 1.0],
            [1.0, -1.0, 1.0],
            [1.0, 1.0, -1.0],
            [1.0, -1.0, -1.0],
            [-1.0, 1.0, 1.0],
            [-1.0, -1.0, 1.0],
            [-1.0, 1.0, -1.0],
            [-1.0, -1.0, -1.0]
        ];
        let y = array![0.3, -1.0, 2.0, 0.5, 0.0, 1.5, -0.7, 0.2];
        let w = array![1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0];
        let fit = weighted_least_squares(h.view(), y.view(), Some(w.view())).unwrap();
        for j in 0..3 {
            let expected = h.column(j).dot(&y) / 8.0;
            assert!((fit.coefficients[j] - expected).abs() < 1e-14);
        }
        assert!((fit.intercept - y.sum() / 8.0).abs() < 1e-14);
    }

    #[test]
    fn rank_deficient_and_wide_designs() {
        use rand::Rng;
        let mut rng = crate::rng::rng_from_seed(9);
        for case in 0..50 {
            let n = rng.random_range(2..12);
            let p = rng.random_range(1..10);
            let mut x = Array2::from_shape_fn((n, p), |_| rng.random_range(-1.0..1.0));
            if case % 2 == 0 && p > 1 {
                let c = x.column(0).to_owned() * 2.0 - x.column(p - 1).to_owned();
                x.column_mut(p / 2).assign(&c);
            }
            let y = Array1::from_shape_fn(n, |_| rng.random_range(-1.0..1.0));
            let fit = least_squares(x.view(), y.view()).unwrap();
            let (grad, off) = optimality(&x, &y, &fit);
            assert!(grad < 1e-10, "case {case}: gradient {grad}");
            assert!(off < 1e-8, "case {case}: not minimum norm ({off})");
            assert_eq!(fit.rank_deficient, fit.rank < p + 1);
        }
    }
}

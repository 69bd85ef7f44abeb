use ndarray::ArrayView2;

use crate::error::{Error, Result};
use crate::importance::{rank_rows, LfiMatrix};

/// Mann-Whitney AUROC: the fraction of positive/negative pairs ranked
/// correctly, ties counting one half.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            what: "labels",
            expected: scores.len(),
            got: labels.len(),
        });
    }
    let n_pos = labels.iter().filter(|&&l| l).count() as u64;
    let n_neg = labels.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // doubled ranks keep tie averages integral
    let mut rank_sum2: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let avg2 = (i + 1 + j) as u64;
        let pos = order[i..j].iter().filter(|&&r| labels[r]).count() as u64;
        rank_sum2 += pos * avg2;
        i = j;
    }
    let u2 = rank_sum2 - n_pos * (n_pos + 1);
    Ok(u2 as f64 / (2 * n_pos * n_neg) as f64)
}

/// Mean over rows of the AUROC of `|scores|` against the signal mask.
pub fn signal_identification(lfi: &LfiMatrix, signal_mask: &[bool]) -> Result<f64> {
    signal_auroc_rows(lfi.scores.view(), signal_mask).map(|v| v.iter().sum::<f64>() / v.len().max(1) as f64)
}

/// Per-row AUROC of `|scores|` against the signal mask.
pub fn signal_auroc_rows(scores: ArrayView2<f64>, signal_mask: &[bool]) -> Result<Vec<f64>> {
    if scores.ncols() != signal_mask.len() {
        return Err(Error::DimensionMismatch {
            what: "signal mask",
            expected: scores.ncols(),
            got: signal_mask.len(),
        });
    }
    let mut abs = vec![0.0; scores.ncols()];
    scores
        .outer_iter()
        .map(|row| {
            for (a, v) in abs.iter_mut().zip(row) {
                *a = v.abs();
            }
            auroc(&abs, signal_mask)
        })
        .collect()
}

/// Mean rank (1 = most important) of each feature group, averaged over rows.
pub fn group_ranks(lfi: &LfiMatrix, groups: &[Vec<usize>]) -> Result<Vec<f64>> {
    let p = lfi.n_features();
    let mut seen = vec![false; p];
    for g in groups {
        if g.is_empty() {
            return Err(Error::InvalidParameter("empty feature group".into()));
        }
        for &k in g {
            if k >= p {
                return Err(Error::OutOfRange { index: k, len: p });
            }
            if std::mem::replace(&mut seen[k], true) {
                return Err(Error::InvalidParameter(format!("feature {k} appears in two groups")));
            }
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::InvalidParameter("groups do not cover every feature".into()));
    }
    let ranks = rank_rows(lfi.scores.view());
    let n = ranks.nrows().max(1) as f64;
    Ok(groups
        .iter()
        .map(|g| {
            let total: f64 = ranks
                .outer_iter()
                .map(|row| g.iter().map(|&k| row[k] as f64).sum::<f64>() / g.len() as f64)
                .sum();
            total / n
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::importance::Method;
    use crate::rng::rng_from_seed;
    use ndarray::Array2;
    use proptest::prelude::*;
    use rand::Rng;

    fn brute(scores: &[f64], labels: &[bool]) -> f64 {
        let mut num = 0.0;
        let mut pairs = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li && !lj {
                    pairs += 1.0;
                    if scores[i] > scores[j] {
                        num += 1.0;
                    } else if scores[i] == scores[j] {
                        num += 0.5;
                    }
                }
            }
        }
        num / pairs
    }

    #[test]
    fn hand_examples() {
        assert_eq!(auroc(&[0.9, 0.1, 0.5], &[true, false, false]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.2, 0.8], &[true, false]).unwrap(), 0.0);
        assert_eq!(auroc(&[0.3; 5], &[true, false, true, false, false]).unwrap(), 0.5);
        assert!(matches!(auroc(&[1.0, 2.0], &[true, true]), Err(Error::SingleClass)));
    }

    proptest! {
        #[test]
        fn matches_pairwise_oracle(
            data in prop::collection::vec((0u8..6, any::<bool>()), 2..60)
        ) {
            let scores: Vec<f64> = data.iter().map(|(s, _)| *s as f64 * 0.25).collect();
            let labels: Vec<bool> = data.iter().map(|(_, l)| *l).collect();
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            prop_assert_eq!(auroc(&scores, &labels).unwrap(), brute(&scores, &labels));
        }
    }

    #[test]
    fn signal_identification_cases() {
        let mask = vec![true, true, false, false, false];
        let oracle = LfiMatrix::new(
            Array2::from_shape_fn((4, 5), |(_, k)| if mask[k] { 1.0 } else { 0.0 }),
            Method::LmdiPlus,
            0,
        );
        assert_eq!(signal_identification(&oracle, &mask).unwrap(), 1.0);
        let zero = LfiMatrix::new(Array2::zeros((4, 5)), Method::LmdiPlus, 0);
        assert_eq!(signal_identification(&zero, &mask).unwrap(), 0.5);
        // negative signal scores count by magnitude
        let neg = LfiMatrix::new(oracle.scores.mapv(|v| -v), Method::LmdiPlus, 0);
        assert_eq!(signal_identification(&neg, &mask).unwrap(), 1.0);
    }

    #[test]
    fn permuted_scores_average_to_half() {
        let mut rng = rng_from_seed(8);
        let mask: Vec<bool> = (0..20).map(|k| k < 5).collect();
        let scores = Array2::from_shape_fn((1000, 20), |_| rng.random::<f64>());
        let lfi = LfiMatrix::new(scores, Method::LmdiPlus, 0);
        let mean = signal_identification(&lfi, &mask).unwrap();
        // per-row AUROC variance under the null: (n1 + n0 + 1) / (12 n1 n0)
        let sd = ((5.0 + 15.0 + 1.0) / (12.0 * 5.0 * 15.0) / 1000.0f64).sqrt();
        assert!((mean - 0.5).abs() < 3.0 * sd, "{mean}");
    }

    #[test]
    fn group_rank_cases() {
        let scores = Array2::from_shape_fn((3, 100), |(_, k)| if k < 6 { 1.0 } else { 0.0 });
        let lfi = LfiMatrix::new(scores, Method::LmdiPlus, 0);
        let groups = vec![(0..6).collect(), (6..50).collect(), (50..100).collect::<Vec<_>>()];
        let r = group_ranks(&lfi, &groups).unwrap();
        assert_eq!(r[0], 3.5);
        assert_eq!(r[1], (7..=50).sum::<usize>() as f64 / 44.0);
        let flat = LfiMatrix::new(Array2::zeros((2, 100)), Method::LmdiPlus, 0);
        assert_eq!(group_ranks(&flat, &groups).unwrap(), r);
        assert!(group_ranks(&lfi, &[(0..100).collect(), vec![]]).is_err());
        assert!(group_ranks(&lfi, &[(0..99).collect()]).is_err());
    }
}

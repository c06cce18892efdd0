//! Friedman rank test across matched folds.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::special::chi_square_sf;
use super::MetricsError;
use crate::Scalar;

pub const SIGNIFICANCE: f64 = 0.05;

/// Per-model fold scores, all of the same length.
pub type FoldScores<T> = BTreeMap<String, Vec<T>>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FriedmanResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub significant: bool,
}

/// Mid-ranks (1-based) of `values` plus the tie term `sum(t^3 - t)`.
fn mid_ranks(values: &[f64]) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        let t = (j - i) as f64;
        ties += t * t * t - t;
        i = j;
    }
    (ranks, ties)
}

/// Friedman chi-square over `groups` (one score sequence per group, matched
/// by fold), with mid-ranks and the tie-corrected divisor. When every fold is
/// fully tied the correction vanishes and the statistic is defined as 0.
pub fn friedman_test<T: Scalar, G: AsRef<[T]>>(groups: &[G]) -> Result<FriedmanResult, MetricsError> {
    let k = groups.len();
    let n = groups.first().map_or(0, |g| g.as_ref().len());
    if k < 2 || n < 2 {
        return Err(MetricsError::TooSmall { groups: k, folds: n });
    }
    for (j, g) in groups.iter().enumerate() {
        let g = g.as_ref();
        if g.len() != n {
            return Err(MetricsError::UnequalFolds { group: j.to_string(), got: g.len(), expected: n });
        }
        if let Some(i) = g.iter().position(|v| !v.is_finite()) {
            return Err(MetricsError::NonFinite(j * n + i));
        }
    }
    let mut rank_sums = vec![0.0; k];
    let mut tie_total = 0.0;
    for fold in 0..n {
        let values: Vec<f64> = groups.iter().map(|g| g.as_ref()[fold].as_f64()).collect();
        let (ranks, ties) = mid_ranks(&values);
        for (r, s) in ranks.iter().zip(&mut rank_sums) {
            *s += r;
        }
        tie_total += ties;
    }
    let (nf, kf) = (n as f64, k as f64);
    let sum_sq: f64 = rank_sums.iter().map(|r| r * r).sum();
    let raw = 12.0 / (nf * kf * (kf + 1.0)) * sum_sq - 3.0 * nf * (kf + 1.0);
    let correction = 1.0 - tie_total / (nf * kf * (kf * kf - 1.0));
    let df = k - 1;
    if correction <= 1e-12 {
        return Ok(FriedmanResult { statistic: 0.0, df, p_value: 1.0, significant: false });
    }
    let statistic = (raw / correction).max(0.0);
    let p_value = chi_square_sf(statistic, df as f64)?;
    Ok(FriedmanResult { statistic, df, p_value, significant: p_value <= SIGNIFICANCE })
}

/// Symmetric matrices of pairwise Friedman p-values and statistics, rows and
/// columns in `models` order. The diagonal holds p = 1, statistic 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseFriedman {
    pub models: Vec<String>,
    pub p_values: Vec<Vec<f64>>,
    pub statistics: Vec<Vec<f64>>,
}

impl PairwiseFriedman {
    pub fn significant(&self, i: usize, j: usize) -> bool {
        i != j && self.p_values[i][j] <= SIGNIFICANCE
    }
}

pub fn pairwise_friedman<T: Scalar>(scores: &FoldScores<T>) -> Result<PairwiseFriedman, MetricsError> {
    let models: Vec<String> = scores.keys().cloned().collect();
    let expected = scores.values().next().map_or(0, Vec::len);
    for (name, s) in scores {
        if s.len() != expected {
            return Err(MetricsError::UnequalFolds { group: name.clone(), got: s.len(), expected });
        }
    }
    let m = models.len();
    let mut p_values = vec![vec![1.0; m]; m];
    let mut statistics = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in i + 1..m {
            let r = friedman_test(&[&scores[&models[i]][..], &scores[&models[j]][..]])?;
            p_values[i][j] = r.p_value;
            p_values[j][i] = r.p_value;
            statistics[i][j] = r.statistic;
            statistics[j][i] = r.statistic;
        }
    }
    Ok(PairwiseFriedman { models, p_values, statistics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn all_wins_over_seven_folds() {
        let a = [0.9; 7];
        let b = [0.1; 7];
        let r = friedman_test::<f64, _>(&[a, b]).unwrap();
        assert!((r.statistic - 7.0).abs() < 1e-12);
        assert!((r.p_value - 0.008_151).abs() < 1e-6);
        assert!(r.significant);
    }

    #[test]
    fn four_three_split() {
        let a = [1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0];
        let b = [0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let r = friedman_test::<f64, _>(&[a, b]).unwrap();
        assert!((r.statistic - 1.0 / 7.0).abs() < 1e-12);
        assert!(!r.significant);
    }

    #[test]
    fn full_ties_give_zero() {
        let r = friedman_test::<f64, _>(&[[0.5; 7], [0.5; 7]]).unwrap();
        assert_eq!((r.statistic, r.p_value, r.significant), (0.0, 1.0, false));
    }

    #[test]
    fn pairwise_matrix_shape() {
        let scores = FoldScores::from([
            ("a".to_string(), vec![0.7, 0.8, 0.75, 0.9]),
            ("b".to_string(), vec![0.7, 0.8, 0.75, 0.9]),
            ("c".to_string(), vec![0.6, 0.5, 0.55, 0.4]),
        ]);
        let m = pairwise_friedman(&scores).unwrap();
        assert_eq!(m.p_values[0][1], 1.0);
        for i in 0..3 {
            assert_eq!(m.p_values[i][i], 1.0);
            for j in 0..3 {
                assert_eq!(m.p_values[i][j], m.p_values[j][i]);
            }
        }
        assert!((m.statistics[0][2] - 4.0).abs() < 1e-12);
        let uneven = FoldScores::from([("a".to_string(), vec![0.1, 0.2]), ("b".to_string(), vec![0.3])]);
        assert!(pairwise_friedman(&uneven).is_err());
    }

    proptest! {
        #[test]
        fn rank_based_and_symmetric(
            rows in prop::collection::vec(prop::collection::vec(0u8..6, 3), 2..12),
        ) {
            let groups: Vec<Vec<f64>> = (0..3).map(|g| rows.iter().map(|r| r[g] as f64 / 5.0).collect()).collect();
            let base = friedman_test::<f64, _>(&groups).unwrap();
            // Strictly increasing transform applied to every score.
            let warped: Vec<Vec<f64>> = groups.iter().map(|g| g.iter().map(|v| (3.0 * v).exp() - 7.0).collect()).collect();
            let w = friedman_test::<f64, _>(&warped).unwrap();
            prop_assert!((base.statistic - w.statistic).abs() < 1e-9);
            prop_assert!((base.p_value - w.p_value).abs() < 1e-9);
            let swapped = friedman_test::<f64, _>(&[&groups[1], &groups[0], &groups[2]]).unwrap();
            prop_assert!((base.statistic - swapped.statistic).abs() < 1e-9);
            prop_assert!(base.statistic >= 0.0 && (0.0..=1.0).contains(&base.p_value));
        }
    }
}

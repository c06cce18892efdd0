//! Exact brute-force k-nearest neighbors.

use serde::{Deserialize, Serialize};

use super::params::{ParamMap, ParamReader};
use super::{check_arity, ModelError};
use crate::matrix::FeatureMatrix;
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnParams {
    pub n_neighbors: usize,
    /// Minkowski exponent, `p >= 1`.
    pub p: f64,
}

impl Default for KnnParams {
    fn default() -> Self {
        Self { n_neighbors: 5, p: 2.0 }
    }
}

impl KnnParams {
    pub fn from_params(params: &ParamMap) -> Result<Self, ModelError> {
        let mut r = ParamReader::new("knn", params);
        let n_neighbors = r.usize_at_least(&["n_neighbors"], 5, 1)?;
        let metric = r.choice(&["metric"], "minkowski", &["minkowski", "euclidean", "manhattan"])?;
        let default_p = match metric {
            "manhattan" => 1.0,
            _ => 2.0,
        };
        let p = r.float(&["p"], default_p, |p| p >= 1.0, "must be >= 1")?;
        // Neighbor search is always exhaustive.
        r.ignore(&["leaf_size", "algorithm"]);
        r.finish()?;
        Ok(Self { n_neighbors, p })
    }
}

/// Minkowski distance of order `p`.
pub fn minkowski<T: Scalar>(a: &[T], b: &[T], p: T) -> T {
    if p == T::one() {
        a.iter().zip(b).map(|(&x, &y)| (x - y).abs()).sum()
    } else if p == T::of(2.0) {
        a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum::<T>().sqrt()
    } else {
        a.iter().zip(b).map(|(&x, &y)| (x - y).abs().powf(p)).sum::<T>().powf(p.recip())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel<T> {
    pub k: usize,
    pub p: T,
    pub train: FeatureMatrix<T>,
    pub labels: Vec<u8>,
}

impl<T: Scalar> KnnModel<T> {
    pub fn fit(params: &KnnParams, x: &FeatureMatrix<T>, y: &[u8]) -> Result<Self, ModelError> {
        if params.n_neighbors > x.n_rows() {
            return Err(ModelError::TooFewRows { k: params.n_neighbors, n: x.n_rows() });
        }
        Ok(Self { k: params.n_neighbors, p: T::of(params.p), train: x.clone(), labels: y.to_vec() })
    }

    /// Indices of the `k` nearest training rows, nearest first; equal
    /// distances are ordered by training row index.
    pub fn neighbors(&self, query: &[T]) -> Vec<usize> {
        let mut dist: Vec<(T, usize)> =
            self.train.rows().enumerate().map(|(i, r)| (minkowski(r, query, self.p), i)).collect();
        let by_key = |a: &(T, usize), b: &(T, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < dist.len() {
            dist.select_nth_unstable_by(self.k - 1, by_key);
            dist.truncate(self.k);
        }
        dist.sort_unstable_by(by_key);
        dist.into_iter().map(|(_, i)| i).collect()
    }

    /// Fraction of class-1 labels among the `k` nearest neighbors.
    pub fn score_row(&self, query: &[T]) -> T {
        let ones = self.neighbors(query).into_iter().filter(|&i| self.labels[i] == 1).count();
        T::of_usize(ones) / T::of_usize(self.k)
    }

    pub fn score_checked(&self, query: &[T]) -> Result<T, ModelError> {
        check_arity(self.train.n_cols(), query.len())?;
        Ok(self.score_row(query))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ParamValue;

    fn model(rows: &[Vec<f64>], y: &[u8], k: usize) -> KnnModel<f64> {
        KnnModel::fit(&KnnParams { n_neighbors: k, p: 2.0 }, &FeatureMatrix::from_rows(rows).unwrap(), y).unwrap()
    }

    #[test]
    fn k1_returns_exact_match_label() {
        let m = model(&[vec![0.0, 0.0], vec![1.0, 1.0], vec![5.0, 5.0]], &[0, 1, 0], 1);
        assert_eq!(m.score_row(&[1.0, 1.0]), 1.0);
        assert_eq!(m.score_row(&[5.0, 5.0]), 0.0);
    }

    #[test]
    fn k3_majority_fraction() {
        let m = model(&[vec![0.0], vec![1.0], vec![2.0], vec![10.0]], &[1, 1, 0, 0], 3);
        assert!((m.score_row(&[0.5]) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn k_equal_n_gives_global_fraction() {
        let m = model(&[vec![0.0], vec![1.0], vec![2.0], vec![10.0]], &[1, 0, 0, 0], 4);
        assert_eq!(m.score_row(&[3.0]), 0.25);
    }

    #[test]
    fn ties_break_by_row_index() {
        let m = model(&[vec![1.0], vec![-1.0], vec![1.0]], &[0, 1, 1], 2);
        assert_eq!(m.neighbors(&[0.0]), vec![0, 1]);
    }

    #[test]
    fn k_larger_than_n_is_an_error() {
        let x = FeatureMatrix::from_rows(&[vec![0.0]]).unwrap();
        assert!(matches!(KnnModel::fit(&KnnParams { n_neighbors: 2, p: 2.0 }, &x, &[0]), Err(ModelError::TooFewRows { .. })));
    }

    #[test]
    fn minkowski_orders() {
        let a = [0.0, 0.0];
        let b = [3.0, 4.0];
        assert_eq!(minkowski(&a, &b, 1.0), 7.0);
        assert_eq!(minkowski(&a, &b, 2.0), 5.0);
        assert!((minkowski(&a, &b, 3.0) - 91f64.powf(1.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn params_accept_table_keys() {
        let p = ParamMap::from([
            ("n_neighbors".to_string(), ParamValue::Int(8)),
            ("leaf_size".into(), ParamValue::Int(1)),
            ("algorithm".into(), ParamValue::Str("ball_tree".into())),
            ("metric".into(), ParamValue::Str("minkowski".into())),
        ]);
        assert_eq!(KnnParams::from_params(&p).unwrap(), KnnParams { n_neighbors: 8, p: 2.0 });
        let bad = ParamMap::from([("p".to_string(), ParamValue::Float(0.5))]);
        assert!(KnnParams::from_params(&bad).is_err());
    }
}

//! Gaussian naive Bayes with variance smoothing.

use serde::{Deserialize, Serialize};

use super::params::{ParamMap, ParamReader};
use super::ModelError;
use crate::matrix::FeatureMatrix;
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnbParams {
    pub var_smoothing: f64,
}

impl Default for GnbParams {
    fn default() -> Self {
        Self { var_smoothing: 1e-9 }
    }
}

impl GnbParams {
    pub fn from_params(params: &ParamMap) -> Result<Self, ModelError> {
        let mut r = ParamReader::new("gnb", params);
        let var_smoothing = r.float(&["var_smoothing"], 1e-9, |v| v >= 0.0, "must be >= 0")?;
        r.finish()?;
        Ok(Self { var_smoothing })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNb<T> {
    /// Indexed by class.
    pub log_prior: [T; 2],
    pub means: [Vec<T>; 2],
    /// Per-class variances, smoothing already added.
    pub variances: [Vec<T>; 2],
    pub epsilon: T,
}

fn mean_var<T: Scalar>(x: &FeatureMatrix<T>, rows: &[usize], j: usize) -> (T, T) {
    let n = T::of_usize(rows.len());
    let mean = rows.iter().map(|&i| x.get(i, j)).sum::<T>() / n;
    let var = rows.iter().map(|&i| (x.get(i, j) - mean).powi(2)).sum::<T>() / n;
    (mean, var)
}

impl<T: Scalar> GaussianNb<T> {
    /// Caller guarantees both classes are present.
    pub fn fit(params: &GnbParams, x: &FeatureMatrix<T>, y: &[u8]) -> Result<Self, ModelError> {
        let all: Vec<usize> = (0..x.n_rows()).collect();
        let max_var = (0..x.n_cols()).map(|j| mean_var(x, &all, j).1).fold(T::zero(), T::max);
        let mut epsilon = T::of(params.var_smoothing) * max_var;
        if epsilon <= T::zero() {
            // All features constant (or no smoothing): keep densities finite.
            epsilon = T::epsilon();
        }
        let by_class: [Vec<usize>; 2] = [0u8, 1].map(|c| all.iter().copied().filter(|&i| y[i] == c).collect());
        let n = T::of_usize(y.len());
        let moments = |rows: &Vec<usize>| -> (Vec<T>, Vec<T>) {
            (0..x.n_cols()).map(|j| mean_var(x, rows, j)).map(|(m, v)| (m, v + epsilon)).unzip()
        };
        let (m0, v0) = moments(&by_class[0]);
        let (m1, v1) = moments(&by_class[1]);
        Ok(Self {
            log_prior: [0, 1].map(|c| (T::of_usize(by_class[c].len()) / n).ln()),
            means: [m0, m1],
            variances: [v0, v1],
            epsilon,
        })
    }

    /// Joint log-likelihood `log P(c) + sum_j log N(x_j; mean_cj, var_cj)` per class.
    pub fn joint_log_likelihood(&self, row: &[T]) -> [T; 2] {
        let two_pi = T::of(2.0) * T::PI();
        [0, 1].map(|c| {
            let mut ll = self.log_prior[c];
            for (j, &v) in row.iter().enumerate() {
                let var = self.variances[c][j];
                let d = v - self.means[c][j];
                ll = ll - T::of(0.5) * (two_pi * var).ln() - d * d / (T::of(2.0) * var);
            }
            ll
        })
    }

    /// Posterior `[P(0 | x), P(1 | x)]`.
    pub fn class_probabilities(&self, row: &[T]) -> [T; 2] {
        let jll = self.joint_log_likelihood(row);
        let top = jll[0].max(jll[1]);
        let lse = top + ((jll[0] - top).exp() + (jll[1] - top).exp()).ln();
        [(jll[0] - lse).exp(), (jll[1] - lse).exp()]
    }

    pub fn score_row(&self, row: &[T]) -> T {
        self.class_probabilities(row)[1].min(T::one()).max(T::zero())
    }
}

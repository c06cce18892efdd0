//! Logistic regression trained by deterministic full-batch descent.
//!
//! Objective: mean log-loss plus `||w||^2 / (2 C n)` (L2) or `||w||_1 / (C n)`
//! (L1), with the bias unpenalized. L2 uses gradient descent, L1 proximal
//! gradient (soft thresholding). Both backtrack until the sufficient-decrease
//! condition holds, so the objective never increases between iterations.

use serde::{Deserialize, Serialize};

use super::params::{ParamMap, ParamReader};
use super::ModelError;
use crate::matrix::FeatureMatrix;
use crate::Scalar;

/// Stop when the (proximal) gradient infinity norm falls below this.
pub const GRADIENT_TOLERANCE: f64 = 1e-6;
const MIN_STEP: f64 = 1e-30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Penalty {
    L1,
    L2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegParams {
    pub penalty: Penalty,
    pub c: f64,
    pub max_iter: usize,
}

impl Default for LogRegParams {
    fn default() -> Self {
        Self { penalty: Penalty::L2, c: 1.0, max_iter: 100 }
    }
}

impl LogRegParams {
    pub fn from_params(params: &ParamMap) -> Result<Self, ModelError> {
        let mut r = ParamReader::new("logreg", params);
        let penalty = match r.choice(&["penalty"], "l2", &["l1", "l2"])? {
            "l1" => Penalty::L1,
            _ => Penalty::L2,
        };
        let c = r.float(&["c", "C"], 1.0, |c| c > 0.0, "must be > 0")?;
        let max_iter = r.usize_at_least(&["max_iter"], 100, 1)?;
        r.ignore(&["solver"]);
        r.finish()?;
        Ok(Self { penalty, c, max_iter })
    }
}

fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// `log(1 + exp(z))` without overflow.
fn softplus<T: Scalar>(z: T) -> T {
    if z > T::zero() {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Training objective over a fixed data set.
pub struct LogisticObjective<'a, T> {
    x: &'a FeatureMatrix<T>,
    y: &'a [u8],
    penalty: Penalty,
    /// `1 / (C n)`.
    lambda: T,
}

impl<'a, T: Scalar> LogisticObjective<'a, T> {
    pub fn new(x: &'a FeatureMatrix<T>, y: &'a [u8], penalty: Penalty, c: f64) -> Self {
        let lambda = T::one() / (T::of(c) * T::of_usize(y.len()));
        Self { x, y, penalty, lambda }
    }

    fn margin(&self, i: usize, w: &[T], b: T) -> T {
        self.x.row(i).iter().zip(w).map(|(&xi, &wi)| xi * wi).sum::<T>() + b
    }

    fn mean_log_loss(&self, w: &[T], b: T) -> T {
        let n = T::of_usize(self.y.len());
        (0..self.y.len())
            .map(|i| {
                let z = self.margin(i, w, b);
                softplus(z) - if self.y[i] == 1 { z } else { T::zero() }
            })
            .sum::<T>()
            / n
    }

    /// Differentiable part: log-loss, plus the penalty when it is L2.
    pub fn smooth_loss(&self, w: &[T], b: T) -> T {
        let loss = self.mean_log_loss(w, b);
        match self.penalty {
            Penalty::L2 => loss + self.lambda * T::of(0.5) * w.iter().map(|&v| v * v).sum::<T>(),
            Penalty::L1 => loss,
        }
    }

    /// Full objective including a non-smooth L1 term.
    pub fn loss(&self, w: &[T], b: T) -> T {
        match self.penalty {
            Penalty::L2 => self.smooth_loss(w, b),
            Penalty::L1 => self.smooth_loss(w, b) + self.lambda * w.iter().map(|v| v.abs()).sum::<T>(),
        }
    }

    /// Gradient of [`Self::smooth_loss`] with respect to `(w, b)`.
    pub fn gradient(&self, w: &[T], b: T) -> (Vec<T>, T) {
        let n = T::of_usize(self.y.len());
        let mut gw = vec![T::zero(); w.len()];
        let mut gb = T::zero();
        for i in 0..self.y.len() {
            let r = sigmoid(self.margin(i, w, b)) - T::of(self.y[i] as f64);
            for (g, &xi) in gw.iter_mut().zip(self.x.row(i)) {
                *g = *g + r * xi;
            }
            gb = gb + r;
        }
        for (g, &wi) in gw.iter_mut().zip(w) {
            *g = *g / n;
            if self.penalty == Penalty::L2 {
                *g = *g + self.lambda * wi;
            }
        }
        (gw, gb / n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticRegression<T> {
    pub weights: Vec<T>,
    pub bias: T,
    pub iterations: usize,
    pub converged: bool,
}

pub struct LogRegFit<T> {
    pub model: LogisticRegression<T>,
    /// Objective value at the start and after every accepted step.
    pub loss_history: Vec<T>,
}

fn inf_norm<T: Scalar>(v: &[T], extra: T) -> T {
    v.iter().fold(extra.abs(), |m, x| m.max(x.abs()))
}

fn soft_threshold<T: Scalar>(v: T, t: T) -> T {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        T::zero()
    }
}

impl<T: Scalar> LogisticRegression<T> {
    pub fn fit(params: &LogRegParams, x: &FeatureMatrix<T>, y: &[u8]) -> Result<LogRegFit<T>, ModelError> {
        let obj = LogisticObjective::new(x, y, params.penalty, params.c);
        let tol = T::of(GRADIENT_TOLERANCE);
        let mut w = vec![T::zero(); x.n_cols()];
        let mut b = T::zero();
        let mut f = obj.smooth_loss(&w, b);
        let mut current = obj.loss(&w, b);
        let mut history = vec![current];
        let mut step = T::one();
        let mut converged = false;
        let mut iterations = 0;

        while iterations < params.max_iter {
            let (gw, gb) = obj.gradient(&w, b);
            if params.penalty == Penalty::L2 && inf_norm(&gw, gb) < tol {
                converged = true;
                break;
            }
            step = step * T::of(2.0);
            let accepted = loop {
                let (cw, cb): (Vec<T>, T) = match params.penalty {
                    Penalty::L2 => (w.iter().zip(&gw).map(|(&wi, &g)| wi - step * g).collect(), b - step * gb),
                    Penalty::L1 => (
                        w.iter().zip(&gw).map(|(&wi, &g)| soft_threshold(wi - step * g, step * obj.lambda)).collect(),
                        b - step * gb,
                    ),
                };
                let fc = obj.smooth_loss(&cw, cb);
                if fc.is_nan() {
                    return Err(ModelError::NanLoss(iterations));
                }
                // f(x+) <= f(x) + g.(x+ - x) + |x+ - x|^2 / (2 t); reduces to
                // Armijo with constant 1/2 for a plain gradient step.
                let dw: Vec<T> = cw.iter().zip(&w).map(|(&a, &o)| a - o).collect();
                let db = cb - b;
                let lin = dw.iter().zip(&gw).map(|(&d, &g)| d * g).sum::<T>() + db * gb;
                let quad = (dw.iter().map(|&d| d * d).sum::<T>() + db * db) / (T::of(2.0) * step);
                let full = obj.loss(&cw, cb);
                if fc <= f + lin + quad && full <= current {
                    break Some((cw, cb, fc, full, inf_norm(&dw, db) / step));
                }
                step = step * T::of(0.5);
                if step < T::of(MIN_STEP) {
                    break None;
                }
            };
            let Some((cw, cb, fc, full, prox_grad)) = accepted else {
                // No representable step decreases the objective.
                converged = true;
                break;
            };
            w = cw;
            b = cb;
            f = fc;
            current = full;
            iterations += 1;
            history.push(full);
            if params.penalty == Penalty::L1 && prox_grad < tol {
                converged = true;
                break;
            }
        }
        Ok(LogRegFit { model: LogisticRegression { weights: w, bias: b, iterations, converged }, loss_history: history })
    }

    pub fn score_row(&self, row: &[T]) -> T {
        let z = row.iter().zip(&self.weights).map(|(&x, &w)| x * w).sum::<T>() + self.bias;
        sigmoid(z)
    }
}

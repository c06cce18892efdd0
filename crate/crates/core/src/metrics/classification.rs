use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::Scalar;

fn check_pairs(pred_len: usize, truths: &[u8]) -> Result<(), MetricsError> {
    if pred_len != truths.len() {
        return Err(MetricsError::LengthMismatch(pred_len, truths.len()));
    }
    if truths.is_empty() {
        return Err(MetricsError::Empty);
    }
    if let Some(&bad) = truths.iter().find(|&&t| t > 1) {
        return Err(MetricsError::BadLabel(bad));
    }
    Ok(())
}

pub fn accuracy(predictions: &[u8], truths: &[u8]) -> Result<f64, MetricsError> {
    check_pairs(predictions.len(), truths)?;
    let correct = predictions.iter().zip(truths).filter(|(p, t)| p == t).count();
    Ok(correct as f64 / truths.len() as f64)
}

/// Binary confusion counts; rows are the true class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tp: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tn + self.fp + self.fn_ + self.tp
    }

    pub fn accuracy(&self) -> f64 {
        (self.tn + self.tp) as f64 / self.total() as f64
    }

    /// Count of rows whose true class is `class`.
    pub fn support(&self, class: u8) -> usize {
        match class {
            0 => self.tn + self.fp,
            _ => self.fn_ + self.tp,
        }
    }

    /// `[P(pred 0 | true c), P(pred 1 | true c)]`, `None` when class `c` is absent.
    pub fn row_fractions(&self, class: u8) -> Option<[f64; 2]> {
        let n = self.support(class);
        if n == 0 {
            return None;
        }
        let (a, b) = if class == 0 { (self.tn, self.fp) } else { (self.fn_, self.tp) };
        Some([a as f64 / n as f64, b as f64 / n as f64])
    }

    pub fn row_normalized(&self) -> [Option<[f64; 2]>; 2] {
        [self.row_fractions(0), self.row_fractions(1)]
    }

    /// Row cells as whole percentages, or `n/a` for an absent class.
    pub fn render_row(&self, class: u8) -> [String; 2] {
        match self.row_fractions(class) {
            Some(r) => r.map(|f| format!("{}%", (f * 100.0).round() as i64)),
            None => [String::from("n/a"), String::from("n/a")],
        }
    }
}

pub fn confusion(predictions: &[u8], truths: &[u8]) -> Result<ConfusionMatrix, MetricsError> {
    check_pairs(predictions.len(), truths)?;
    let mut m = ConfusionMatrix { tn: 0, fp: 0, fn_: 0, tp: 0 };
    for (&p, &t) in predictions.iter().zip(truths) {
        match (t, p != 0) {
            (0, false) => m.tn += 1,
            (0, true) => m.fp += 1,
            (_, false) => m.fn_ += 1,
            (_, true) => m.tp += 1,
        }
    }
    Ok(m)
}

/// Mann-Whitney AUC: the probability that a random positive outscores a
/// random negative, ties counting one half.
///
/// Ranks are kept doubled so the statistic stays an integer and the result
/// equals the all-pairs count `(2 * wins + ties) / (2 * n_pos * n_neg)` bit for bit.
pub fn roc_auc<T: Scalar>(scores: &[T], truths: &[u8]) -> Result<f64, MetricsError> {
    check_pairs(scores.len(), truths)?;
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(MetricsError::NonFinite(i));
    }
    let n_pos = truths.iter().filter(|&&t| t == 1).count() as u128;
    let n_neg = truths.len() as u128 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut doubled_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // Positions i+1..=j share the mid-rank (i + 1 + j) / 2.
        let doubled = (i + 1 + j) as u128;
        let pos_in_group = order[i..j].iter().filter(|&&k| truths[k] == 1).count() as u128;
        doubled_rank_sum += doubled * pos_in_group;
        i = j;
    }
    let twice_u = doubled_rank_sum - n_pos * (n_pos + 1);
    Ok(twice_u as f64 / (2 * n_pos * n_neg) as f64)
}

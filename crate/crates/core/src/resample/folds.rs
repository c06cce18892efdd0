use std::cmp::Ordering;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::ResampleError;
use crate::cube::{Dataset, FeatureRow};
use crate::rng::stream;
use crate::Scalar;

/// Fold id for every row of the dataset the plan was built from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub assignments: Vec<usize>,
}

impl FoldPlan {
    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    /// `(fit rows, held-out rows)` for `fold`.
    pub fn indices(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        (0..self.assignments.len()).partition(|&i| self.assignments[i] != fold)
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignments {
            sizes[f] += 1;
        }
        sizes
    }
}

fn row_key_cmp<T: Scalar>(a: &FeatureRow<T>, b: &FeatureRow<T>) -> Ordering {
    a.meta
        .cmp(&b.meta)
        .then(a.month.cmp(&b.month))
        .then(a.class.cmp(&b.class))
        .then_with(|| {
            a.features.iter().zip(&b.features).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
        })
}

/// Class-stratified k folds. Within a class, rows are put in row-key order,
/// shuffled with the seeded stream and dealt round-robin; each class starts
/// dealing where the previous one stopped, so overall fold sizes also differ
/// by at most one.
pub fn make_folds<T: Scalar>(dataset: &Dataset<T>, k: usize, seed: u64) -> Result<FoldPlan, ResampleError> {
    if k < 2 {
        return Err(ResampleError::FoldCount(k));
    }
    let mut assignments = vec![0; dataset.len()];
    let mut next = 0;
    for class in [0u8, 1] {
        let mut rows: Vec<usize> = (0..dataset.len()).filter(|&i| dataset.rows[i].class == class).collect();
        if rows.is_empty() {
            continue;
        }
        if rows.len() < k {
            return Err(ResampleError::ClassTooSmall { class, rows: rows.len(), k });
        }
        rows.sort_by(|&a, &b| row_key_cmp(&dataset.rows[a], &dataset.rows[b]));
        rows.shuffle(&mut stream(seed, &[u64::from(class)]));
        for &i in &rows {
            assignments[i] = next;
            next = (next + 1) % k;
        }
    }
    Ok(FoldPlan { k, seed, assignments })
}

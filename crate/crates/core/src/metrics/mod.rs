//! Evaluation metrics and the statistics used to compare models.

pub mod classification;
pub mod friedman;
pub mod kde;
pub mod special;

pub use classification::{accuracy, confusion, roc_auc, ConfusionMatrix};
pub use friedman::{friedman_test, pairwise_friedman, FoldScores, FriedmanResult, PairwiseFriedman, SIGNIFICANCE};
pub use kde::{kde, kde_at, trapezoid, KdeCurve, KdeGrid, DEFAULT_BANDWIDTH, DEFAULT_GRID_POINTS};
pub use special::{chi_square_sf, ln_gamma, regularized_gamma_p, regularized_gamma_q};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricsError {
    #[error("empty input")]
    Empty,
    #[error("length mismatch: {0} predictions vs {1} truths")]
    LengthMismatch(usize, usize),
    #[error("label {0} is not 0 or 1")]
    BadLabel(u8),
    #[error("AUC is undefined when only one class is present")]
    SingleClass,
    #[error("non-finite score at position {0}")]
    NonFinite(usize),
    #[error("bandwidth must be > 0, got {0}")]
    Bandwidth(f64),
    #[error("friedman test needs at least 2 groups and 2 folds (got {groups} groups, {folds} folds)")]
    TooSmall { groups: usize, folds: usize },
    #[error("group `{group}` has {got} fold scores, expected {expected}")]
    UnequalFolds { group: String, got: usize, expected: usize },
    #[error("invalid argument: {0}")]
    Domain(String),
}

//! Stratified train/test splitting, stratified k-fold plans and grid search
//! scored by cross-validated AUC.

pub mod folds;
pub mod grid;
pub mod split;

pub use folds::{make_folds, FoldPlan};
pub use grid::{grid_search, mean, CandidateScore, ParamGrid, TuneResult};
pub use split::{round_half_even, stratified_split, NeighborhoodCoverage, SplitResult, SplitSpec, StratumSplit};

use crate::metrics::MetricsError;
use crate::models::ModelError;

#[derive(Debug, thiserror::Error)]
pub enum ResampleError {
    #[error("train fraction must lie strictly between 0 and 1, got {0}")]
    Fraction(f64),
    #[error("stratum {stratum} has {rows} row(s); at least 2 are needed to split it")]
    StratumTooSmall { stratum: String, rows: usize },
    #[error("k must be at least 2, got {0}")]
    FoldCount(usize),
    #[error("class {class} has {rows} row(s), fewer than k = {k}")]
    ClassTooSmall { class: u8, rows: usize, k: usize },
    #[error("fold plan covers {plan} rows but the training data has {data}")]
    PlanMismatch { plan: usize, data: usize },
    #[error("parameter `{0}` has an empty value list")]
    EmptyValues(String),
    #[error("every grid candidate failed; first failure: {0}")]
    AllFailed(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

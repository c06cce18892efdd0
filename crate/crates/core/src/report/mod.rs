//! End-to-end benchmark orchestration and report output.

pub mod benchmark;
pub mod emit;
pub mod pipeline;

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use benchmark::{
    fit_family, run_benchmark, split_and_scale, tune_family, tuning_folds, write_predictions, BenchmarkOutcome, Prepared,
};
pub use emit::{emit_all, read_report, render_markdown, write_json};
pub use pipeline::{ingest_files, month_window, read_dataset, sidecar_path, write_dataset, write_tagged_rejects, IngestOutcome};

use crate::cube::{Dataset, NormalizeScope};
use crate::ingest::CleaningReport;
use crate::metrics::{ConfusionMatrix, KdeCurve, PairwiseFriedman};
use crate::models::{Family, ParamMap};

pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("stage `{stage}` failed: {message}")]
    Stage { stage: String, message: String },
    #[error("cannot write {path}: {message}")]
    Output { path: PathBuf, message: String },
}

impl ReportError {
    pub fn stage(stage: &str, err: impl std::fmt::Display) -> Self {
        ReportError::Stage { stage: stage.to_string(), message: err.to_string() }
    }

    pub fn output(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        ReportError::Output { path: path.into(), message: err.to_string() }
    }

    /// 2 for configuration problems, 3 for bad input data, 4 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            ReportError::Config(_) => 2,
            ReportError::Data(_) => 3,
            ReportError::Stage { .. } | ReportError::Output { .. } => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodTally {
    pub neighborhood: String,
    pub hits: usize,
    pub misses: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lon: Option<f64>,
}

/// Correct and incorrect predictions per neighborhood of `test`, in
/// neighborhood order.
pub fn neighborhood_tallies<T>(test: &Dataset<T>, predictions: &[u8]) -> Vec<NeighborhoodTally> {
    let mut counts: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for (row, &p) in test.rows.iter().zip(predictions) {
        let e = counts.entry(row.meta.neighborhood.as_str()).or_default();
        if row.class == p {
            e.0 += 1;
        } else {
            e.1 += 1;
        }
    }
    counts
        .into_iter()
        .map(|(n, (hits, misses))| NeighborhoodTally { neighborhood: n.to_string(), hits, misses, lat: None, lon: None })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub rows: usize,
    /// `[class 0, class 1]`.
    pub class_counts: [usize; 2],
    pub neighborhoods: usize,
    pub removed_neighborhoods: Vec<String>,
    pub discarded_types: BTreeMap<String, usize>,
    pub cleaning: CleaningReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub train: usize,
    pub test: usize,
    pub train_class_counts: [usize; 2],
    pub test_class_counts: [usize; 2],
    pub flagged_neighborhoods: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub family: Family,
    pub best_params: ParamMap,
    pub tune_candidates: usize,
    pub tune_mean_auc: f64,
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
    /// `None` when the test split holds a single class.
    pub test_auc: Option<f64>,
    /// Fresh k-fold AUCs on the training split with the tuned parameters.
    pub cv_auc: Vec<f64>,
    /// Test accuracy of the same parameters on label-shuffled data.
    pub control_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format_version: u32,
    pub seed: u64,
    pub k: usize,
    pub train_fraction: f64,
    pub normalization: NormalizeScope,
    pub threshold: f64,
    pub dataset: DatasetSummary,
    pub split: SplitSummary,
    /// Accuracy descending, ties by family name.
    pub models: Vec<ModelReport>,
    pub friedman: PairwiseFriedman,
    pub kde: BTreeMap<String, KdeCurve<f64>>,
    pub tallies: BTreeMap<String, Vec<NeighborhoodTally>>,
    /// Grid sections naming no implemented family.
    pub foreign_grids: Vec<String>,
}

pub fn sort_models(models: &mut [ModelReport]) {
    models.sort_by(|a, b| b.accuracy.total_cmp(&a.accuracy).then_with(|| a.family.name().cmp(b.family.name())));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cube::{CellKey, CrimeTaxonomy, FeatureRow, N_CRIME_TYPES};

    fn test_rows(n: usize, neighborhoods: usize) -> Dataset<f64> {
        let rows = (0..n)
            .map(|i| FeatureRow {
                meta: CellKey::new(2016, 1 + (i % 12) as u32, format!("N{}", i % neighborhoods)),
                month: 1 + (i % 12) as u32,
                features: vec![0.0; N_CRIME_TYPES],
                class: (i % 2) as u8,
            })
            .collect();
        Dataset::new(rows, CrimeTaxonomy::standard())
    }

    #[test]
    fn tallies_conserve_rows() {
        let ds = test_rows(10, 1);
        let mut preds = ds.labels();
        preds[0] ^= 1;
        preds[3] ^= 1;
        preds[8] ^= 1;
        let t = neighborhood_tallies(&ds, &preds);
        assert_eq!(t.len(), 1);
        assert_eq!((t[0].hits, t[0].misses), (7, 3));
        let ds = test_rows(30, 4);
        let t = neighborhood_tallies(&ds, &ds.labels());
        assert!(t.iter().all(|x| x.misses == 0));
        assert_eq!(t.iter().map(|x| x.hits + x.misses).sum::<usize>(), 30);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(ReportError::Config("x".into()).exit_code(), 2);
        assert_eq!(ReportError::Data("x".into()).exit_code(), 3);
        assert_eq!(ReportError::stage("tune", "boom").exit_code(), 4);
    }
}

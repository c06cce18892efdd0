use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FoldPlan, ResampleError};
use crate::matrix::FeatureMatrix;
use crate::metrics::roc_auc;
use crate::models::{ModelError, ModelFactory, ParamMap, ParamValue};
use crate::rng::derive_seed;
use crate::Scalar;

/// Parameter name to candidate values. Candidates enumerate the cartesian
/// product with names in lexicographic order and the last name varying
/// fastest; an empty grid is the single all-defaults candidate.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamGrid(pub BTreeMap<String, Vec<ParamValue>>);

impl ParamGrid {
    pub fn new(values: BTreeMap<String, Vec<ParamValue>>) -> Result<Self, ResampleError> {
        let grid = Self(values);
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<(), ResampleError> {
        match self.0.iter().find(|(_, v)| v.is_empty()) {
            Some((name, _)) => Err(ResampleError::EmptyValues(name.clone())),
            None => Ok(()),
        }
    }

    pub fn len(&self) -> usize {
        self.0.values().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn candidates(&self) -> Vec<ParamMap> {
        let mut out = vec![ParamMap::new()];
        for (name, values) in &self.0 {
            out = out
                .into_iter()
                .flat_map(|base| {
                    values.iter().map(move |v| {
                        let mut m = base.clone();
                        m.insert(name.clone(), v.clone());
                        m
                    })
                })
                .collect();
        }
        out
    }
}

/// Cross-validation outcome of one grid candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub index: usize,
    pub params: ParamMap,
    pub fold_auc: Vec<f64>,
    pub mean_auc: Option<f64>,
    /// Population standard deviation of `fold_auc`.
    pub sd_auc: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub family: String,
    pub k: usize,
    pub seed: u64,
    pub best_index: usize,
    pub best_params: ParamMap,
    pub best_mean_auc: f64,
    pub per_fold_auc: Vec<f64>,
    pub cv_table: Vec<CandidateScore>,
}

/// Mean of fold scores, summed in fold order.
pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn population_sd(values: &[f64]) -> f64 {
    let m = mean(values);
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64).sqrt()
}

fn fold_job<T: Scalar>(
    factory: &dyn ModelFactory<T>,
    params: &ParamMap,
    seed: u64,
    x: &FeatureMatrix<T>,
    y: &[u8],
    plan: &FoldPlan,
    fold: usize,
) -> Result<f64, String> {
    let (fit_rows, held_out) = plan.indices(fold);
    let fit_y: Vec<u8> = fit_rows.iter().map(|&i| y[i]).collect();
    let model = factory.fit_boxed(params, seed, &x.select_rows(&fit_rows), &fit_y).map_err(|e: ModelError| e.to_string())?;
    let scores = model.scores(&x.select_rows(&held_out)).map_err(|e| e.to_string())?;
    let truth: Vec<u8> = held_out.iter().map(|&i| y[i]).collect();
    roc_auc(&scores, &truth).map_err(|e| format!("fold {fold}: {e}"))
}

/// Exhaustive grid search. Every candidate is fitted on `k - 1` folds and
/// scored by AUC on the held-out fold. Each (candidate, fold) job gets the
/// seed `derive_seed(seed, [candidate, fold])`, so the result does not depend
/// on scheduling. The winner has the highest mean AUC; ties go to the earlier
/// candidate. Candidates that fail on any fold are kept in the table but
/// cannot win.
pub fn grid_search<T: Scalar>(
    factory: &dyn ModelFactory<T>,
    grid: &ParamGrid,
    x: &FeatureMatrix<T>,
    y: &[u8],
    plan: &FoldPlan,
    seed: u64,
) -> Result<TuneResult, ResampleError> {
    grid.validate()?;
    if plan.len() != x.n_rows() || y.len() != x.n_rows() {
        return Err(ResampleError::PlanMismatch { plan: plan.len(), data: x.n_rows() });
    }
    let candidates = grid.candidates();
    let k = plan.k;
    let jobs: Vec<Result<f64, String>> = (0..candidates.len() * k)
        .into_par_iter()
        .map(|job| {
            let (c, fold) = (job / k, job % k);
            let job_seed = derive_seed(seed, &[c as u64, fold as u64]);
            fold_job(factory, &candidates[c], job_seed, x, y, plan, fold)
        })
        .collect();

    let mut table = Vec::with_capacity(candidates.len());
    for (c, params) in candidates.into_iter().enumerate() {
        let results = &jobs[c * k..(c + 1) * k];
        let failure = results.iter().find_map(|r| r.as_ref().err().cloned());
        let fold_auc: Vec<f64> = results.iter().filter_map(|r| r.as_ref().ok().copied()).collect();
        let (mean_auc, sd_auc) = match failure {
            None => (Some(mean(&fold_auc)), Some(population_sd(&fold_auc))),
            Some(_) => (None, None),
        };
        table.push(CandidateScore { index: c, params, fold_auc, mean_auc, sd_auc, failure });
    }

    let mut best: Option<&CandidateScore> = None;
    for cand in &table {
        if let Some(m) = cand.mean_auc {
            if best.is_none_or(|b| m > b.mean_auc.unwrap_or(f64::NEG_INFINITY)) {
                best = Some(cand);
            }
        }
    }
    let Some(best) = best else {
        let first = table.iter().find_map(|c| c.failure.clone()).unwrap_or_default();
        return Err(ResampleError::AllFailed(first));
    };
    Ok(TuneResult {
        family: factory.name(),
        k,
        seed,
        best_index: best.index,
        best_params: best.params.clone(),
        best_mean_auc: best.mean_auc.unwrap_or_default(),
        per_fold_auc: best.fold_auc.clone(),
        cv_table: table,
    })
}

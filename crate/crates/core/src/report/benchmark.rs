//! The full protocol: ingest, dataset, split, tune, refit, evaluate, then
//! cross-validated AUCs, pairwise Friedman tests and KDE curves.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pipeline::{create_dir, ingest_files, month_window, write_dataset};
use super::{
    emit_all, neighborhood_tallies, sort_models, write_json, DatasetSummary, EvalReport, ModelReport, NeighborhoodTally,
    ReportError, SplitSummary, REPORT_FORMAT_VERSION,
};
use crate::config::PipelineConfig;
use crate::cube::{
    build_dataset, class_balance, minmax_normalize, Dataset, NormalizeScope, ScalerParams,
};
use crate::matrix::FeatureMatrix;
use crate::metrics::{accuracy, confusion, kde, pairwise_friedman, roc_auc, FoldScores, KdeGrid};
use crate::models::{fit, Classifier, Family, FittedModel, ModelSpec, ParamMap, Prediction};
use crate::resample::{grid_search, make_folds, stratified_split, FoldPlan, ParamGrid, SplitResult, SplitSpec, TuneResult};
use crate::rng::{derive_seed, stream};
use crate::Scalar;

// Stream coordinates below the master seed.
const SPLIT: u64 = 1;
const TUNE_FOLDS: u64 = 2;
const CV_FOLDS: u64 = 3;
const TUNE: u64 = 4;
const REFIT: u64 = 5;
const CV_FIT: u64 = 6;
const CONTROL_LABELS: u64 = 7;
const CONTROL_FIT: u64 = 8;

#[derive(Debug, Clone)]
pub struct BenchmarkOutcome {
    pub report: EvalReport,
    /// Wall-clock seconds per stage; kept out of the report so that stays reproducible.
    pub timings: BTreeMap<String, f64>,
}

#[derive(Debug, Serialize)]
struct PredictionRecord<'a> {
    year: i32,
    month: u32,
    neighborhood: &'a str,
    class: u8,
    score: f64,
    prediction: u8,
}

#[derive(Debug, Serialize, Deserialize)]
struct SplitArtifact {
    split: SplitResult,
    tune_folds: FoldPlan,
    cv_folds: FoldPlan,
}

#[derive(Debug, Deserialize)]
struct Centroid {
    neighborhood: String,
    lat: f64,
    lon: f64,
}

struct FamilyOutcome<T> {
    report: ModelReport,
    tune: TuneResult,
    model: FittedModel<T>,
    predictions: Vec<Prediction<T>>,
    seconds: f64,
}

fn family_index(f: Family) -> u64 {
    Family::ALL.iter().position(|&g| g == f).unwrap_or(0) as u64
}

/// A split plus the dataset scaled for the configured scope, and its two sides.
#[derive(Debug, Clone)]
pub struct Prepared<T> {
    pub split: SplitResult,
    /// All rows, scaled with the scope's scaler.
    pub dataset: Dataset<T>,
    pub train: Dataset<T>,
    pub test: Dataset<T>,
}

/// Split `raw` exactly as the benchmark does, then scale it. `full` fits the
/// scaler on every row, `train-fit` on the training side only (test values
/// leave `[0, 1]` unless `clamp`), `none` keeps raw counts.
pub fn split_and_scale<T: Scalar>(
    raw: &Dataset<T>,
    scope: NormalizeScope,
    clamp: bool,
    train_fraction: f64,
    stratify_year: bool,
    seed: u64,
) -> Result<Prepared<T>, ReportError> {
    let spec = SplitSpec { train_fraction, stratify_year, seed: derive_seed(seed, &[SPLIT]) };
    let split = stratified_split(raw, &spec).map_err(|e| ReportError::Data(e.to_string()))?;
    let norm = |reference| minmax_normalize(raw, reference, clamp).map_err(|e| ReportError::stage("normalize", e));
    let dataset = match scope {
        NormalizeScope::Full => norm(None)?,
        NormalizeScope::TrainFit => match ScalerParams::fit(&raw.subset(&split.train).rows) {
            Some(s) => norm(Some(&s))?,
            None => raw.clone(),
        },
        NormalizeScope::None => raw.clone(),
    };
    let train = dataset.subset(&split.train);
    let test = dataset.subset(&split.test);
    Ok(Prepared { split, dataset, train, test })
}

/// Folds used for tuning on `train`.
pub fn tuning_folds<T: Scalar>(train: &Dataset<T>, k: usize, seed: u64) -> Result<FoldPlan, ReportError> {
    make_folds(train, k, derive_seed(seed, &[TUNE_FOLDS])).map_err(|e| ReportError::Data(e.to_string()))
}

/// Grid search for one family on `train` with k stratified folds.
pub fn tune_family<T: Scalar>(
    family: Family,
    grid: &ParamGrid,
    train: &Dataset<T>,
    plan: &FoldPlan,
    seed: u64,
) -> Result<TuneResult, ReportError> {
    grid_search(&family, grid, &train.matrix(), &train.labels(), plan, derive_seed(seed, &[TUNE, family_index(family)]))
        .map_err(|e| ReportError::stage(&format!("tune:{family}"), e))
}

/// Final fit of `family` with `params` on `train`.
pub fn fit_family<T: Scalar>(
    family: Family,
    params: &ParamMap,
    train: &Dataset<T>,
    threshold: f64,
    seed: u64,
) -> Result<FittedModel<T>, ReportError> {
    let spec = ModelSpec::new(family, params.clone(), derive_seed(seed, &[REFIT, family_index(family)]));
    let mut model = fit(&spec, &train.matrix(), &train.labels()).map_err(|e| ReportError::stage(&format!("fit:{family}"), e))?;
    model.threshold = T::of(threshold);
    Ok(model)
}

fn class_counts<T>(d: &Dataset<T>) -> [usize; 2] {
    let (a, b) = class_balance(d);
    [a, b]
}

fn cv_aucs<T: Scalar>(
    family: Family,
    spec_params: &ParamMap,
    seed: u64,
    x: &FeatureMatrix<T>,
    y: &[u8],
    plan: &FoldPlan,
) -> Result<Vec<f64>, ReportError> {
    let fi = family_index(family);
    (0..plan.k)
        .map(|fold| {
            let (fit_rows, held) = plan.indices(fold);
            let fit_y: Vec<u8> = fit_rows.iter().map(|&i| y[i]).collect();
            let spec = ModelSpec::new(family, spec_params.clone(), derive_seed(seed, &[CV_FIT, fi, fold as u64]));
            let model = fit(&spec, &x.select_rows(&fit_rows), &fit_y).map_err(|e| ReportError::stage(&format!("cv:{family}"), e))?;
            let scores = model.scores(&x.select_rows(&held)).map_err(|e| ReportError::stage(&format!("cv:{family}"), e))?;
            let truth: Vec<u8> = held.iter().map(|&i| y[i]).collect();
            roc_auc(&scores, &truth).map_err(|e| ReportError::stage(&format!("cv:{family}"), e))
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn run_family<T: Scalar>(
    config: &PipelineConfig,
    family: Family,
    train: &Dataset<T>,
    test: &Dataset<T>,
    tune_plan: &FoldPlan,
    cv_plan: &FoldPlan,
) -> Result<FamilyOutcome<T>, ReportError> {
    let started = Instant::now();
    let b = &config.benchmark;
    let stage = |s: &str| format!("{s}:{family}");
    let grid = config.grid_for(family).cloned().unwrap_or_default();
    let tune = tune_family(family, &grid, train, tune_plan, b.seed)?;
    let model = fit_family(family, &tune.best_params, train, b.threshold, b.seed)?;
    let predictions = model.predict(&test.matrix()).map_err(|e| ReportError::stage(&stage("predict"), e))?;
    let labels: Vec<u8> = predictions.iter().map(|p| p.label).collect();
    let scores: Vec<T> = predictions.iter().map(|p| p.score).collect();
    let truth = test.labels();
    let acc = accuracy(&labels, &truth).map_err(|e| ReportError::stage(&stage("evaluate"), e))?;
    let cm = confusion(&labels, &truth).map_err(|e| ReportError::stage(&stage("evaluate"), e))?;
    let cv_auc = cv_aucs(family, &tune.best_params, b.seed, &train.matrix(), &train.labels(), cv_plan)?;

    let report = ModelReport {
        family,
        best_params: tune.best_params.clone(),
        tune_candidates: tune.cv_table.len(),
        tune_mean_auc: tune.best_mean_auc,
        accuracy: acc,
        confusion: cm,
        test_auc: roc_auc(&scores, &truth).ok(),
        cv_auc,
        control_accuracy: None,
    };
    Ok(FamilyOutcome { report, tune, model, predictions, seconds: started.elapsed().as_secs_f64() })
}

/// Accuracy of each family's tuned parameters after permuting all labels.
fn shuffled_control<T: Scalar>(
    config: &PipelineConfig,
    raw: &Dataset<T>,
    outcomes: &[FamilyOutcome<T>],
) -> Result<Vec<f64>, ReportError> {
    let b = &config.benchmark;
    let mut labels = raw.labels();
    labels.shuffle(&mut stream(b.seed, &[CONTROL_LABELS]));
    let mut shuffled = raw.clone();
    for (row, l) in shuffled.rows.iter_mut().zip(labels) {
        row.class = l;
    }
    let Prepared { train, test, .. } = split_and_scale(&shuffled, b.normalize, b.clamp, b.train_fraction, b.stratify_year, b.seed)
        .map_err(|e| ReportError::stage("control", e))?;
    let (x, y) = (train.matrix(), train.labels());
    let (tx, ty) = (test.matrix(), test.labels());
    outcomes
        .par_iter()
        .map(|o| {
            let family = o.report.family;
            let spec = ModelSpec::new(family, o.report.best_params.clone(), derive_seed(b.seed, &[CONTROL_FIT, family_index(family)]));
            let mut model = fit(&spec, &x, &y).map_err(|e| ReportError::stage("control", e))?;
            model.threshold = T::of(b.threshold);
            let preds: Vec<u8> =
                model.predict(&tx).map_err(|e| ReportError::stage("control", e))?.into_iter().map(|p| p.label).collect();
            accuracy(&preds, &ty).map_err(|e| ReportError::stage("control", e))
        })
        .collect()
}

fn load_centroids(path: &Path) -> Result<BTreeMap<String, (f64, f64)>, ReportError> {
    let data_err = |e: &dyn std::fmt::Display| ReportError::Data(format!("{}: {e}", path.display()));
    let mut rdr = csv::Reader::from_path(path).map_err(|e| data_err(&e))?;
    rdr.deserialize::<Centroid>()
        .map(|r| r.map(|c| (crate::ingest::normalize_text(&c.neighborhood), (c.lat, c.lon))).map_err(|e| data_err(&e)))
        .collect()
}

/// CSV `year,month,neighborhood,class,score,prediction`, one line per test row.
pub fn write_predictions<T: Scalar>(path: &Path, test: &Dataset<T>, predictions: &[Prediction<T>]) -> Result<(), ReportError> {
    let file = File::create(path).map_err(|e| ReportError::output(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    for (row, p) in test.rows.iter().zip(predictions) {
        w.serialize(PredictionRecord {
            year: row.meta.year,
            month: row.meta.month,
            neighborhood: &row.meta.neighborhood,
            class: row.class,
            score: p.score.as_f64(),
            prediction: p.label,
        })
        .map_err(|e| ReportError::output(path, e))?;
    }
    w.flush().map_err(|e| ReportError::output(path, e))
}

/// Run the whole benchmark described by `config`, writing every artifact
/// under `config.benchmark.out_dir`. Artifacts written before a failure are
/// left in place.
pub fn run_benchmark<T: Scalar>(config: &PipelineConfig) -> Result<BenchmarkOutcome, ReportError> {
    let total = Instant::now();
    let b = &config.benchmark;
    config.validate().map_err(|e| ReportError::Config(e.to_string()))?;
    if b.incidents.is_empty() {
        return Err(ReportError::Config("benchmark.incidents lists no input files".into()));
    }
    let out = b.out_dir.as_path();
    for dir in [out.to_path_buf(), out.join("tune"), out.join("models"), out.join("predictions")] {
        create_dir(&dir)?;
    }
    let mut timings = BTreeMap::new();
    let mut lap = Instant::now();
    let mut tick = |name: &str, timings: &mut BTreeMap<String, f64>| {
        timings.insert(name.to_string(), lap.elapsed().as_secs_f64());
        lap = Instant::now();
    };

    let ingested = ingest_files(&b.incidents, &config.ingest)?;
    write_json(&out.join("cleaning.json"), &ingested.report)?;
    tick("ingest", &mut timings);

    let taxonomy = config.taxonomy.build().map_err(|e| ReportError::Config(e.to_string()))?;
    let built = build_dataset::<T>(&ingested.incidents, &taxonomy, month_window(&config.ingest)?);
    let raw = built.dataset;
    if raw.is_empty() {
        return Err(ReportError::Data("no labeled rows: the input needs at least two consecutive months per neighborhood".into()));
    }
    write_dataset(&out.join("dataset.csv"), &raw, NormalizeScope::None)?;
    tick("dataset", &mut timings);

    let Prepared { split, train, test, .. } = split_and_scale(&raw, b.normalize, b.clamp, b.train_fraction, b.stratify_year, b.seed)?;
    let tune_plan = tuning_folds(&train, b.k, b.seed)?;
    let cv_plan = if b.reuse_tuning_folds {
        tune_plan.clone()
    } else {
        make_folds(&train, b.k, derive_seed(b.seed, &[CV_FOLDS])).map_err(|e| ReportError::Data(e.to_string()))?
    };
    write_json(
        &out.join("split.json"),
        &SplitArtifact { split: split.clone(), tune_folds: tune_plan.clone(), cv_folds: cv_plan.clone() },
    )?;
    tick("split", &mut timings);

    let outcomes: Vec<FamilyOutcome<T>> = b
        .families
        .par_iter()
        .map(|&family| run_family(config, family, &train, &test, &tune_plan, &cv_plan))
        .collect::<Result<_, _>>()?;
    for o in &outcomes {
        let name = o.report.family.name();
        write_json(&out.join("tune").join(format!("{name}.json")), &o.tune)?;
        let model_path = out.join("models").join(format!("{name}.json"));
        let json = o.model.to_json().map_err(|e| ReportError::output(&model_path, e))?;
        std::fs::write(&model_path, json).map_err(|e| ReportError::output(&model_path, e))?;
        write_predictions(&out.join("predictions").join(format!("{name}.csv")), &test, &o.predictions)?;
        timings.insert(format!("family:{name}"), o.seconds);
    }
    tick("models", &mut timings);

    let fold_scores: FoldScores<f64> = outcomes.iter().map(|o| (o.report.family.name().to_string(), o.report.cv_auc.clone())).collect();
    write_json(&out.join("cv_scores.json"), &fold_scores)?;
    let friedman = pairwise_friedman(&fold_scores).map_err(|e| ReportError::stage("friedman", e))?;
    let grid = KdeGrid { points: b.kde_points, range: None };
    let kde_curves = fold_scores
        .iter()
        .map(|(name, s)| Ok((name.clone(), kde(s, b.kde_bandwidth, &grid).map_err(|e| ReportError::stage("kde", e))?)))
        .collect::<Result<BTreeMap<_, _>, ReportError>>()?;
    let centroids = match &b.centroids {
        Some(p) => Some(load_centroids(p)?),
        None => None,
    };
    let tallies: BTreeMap<String, Vec<NeighborhoodTally>> = outcomes
        .iter()
        .map(|o| {
            let labels: Vec<u8> = o.predictions.iter().map(|p| p.label).collect();
            let mut t = neighborhood_tallies(&test, &labels);
            if let Some(c) = &centroids {
                for row in &mut t {
                    if let Some(&(lat, lon)) = c.get(&row.neighborhood) {
                        row.lat = Some(lat);
                        row.lon = Some(lon);
                    }
                }
            }
            (o.report.family.name().to_string(), t)
        })
        .collect();
    tick("statistics", &mut timings);

    let control = if b.shuffle_control { Some(shuffled_control(config, &raw, &outcomes)?) } else { None };
    tick("control", &mut timings);

    let mut models: Vec<ModelReport> = outcomes.iter().map(|o| o.report.clone()).collect();
    if let Some(c) = control {
        for (m, acc) in models.iter_mut().zip(c) {
            m.control_accuracy = Some(acc);
        }
    }
    sort_models(&mut models);
    let report = EvalReport {
        format_version: REPORT_FORMAT_VERSION,
        seed: b.seed,
        k: b.k,
        train_fraction: b.train_fraction,
        normalization: b.normalize,
        threshold: b.threshold,
        dataset: DatasetSummary {
            rows: raw.len(),
            class_counts: class_counts(&raw),
            neighborhoods: raw.neighborhoods().len(),
            removed_neighborhoods: built.completeness.removed.clone(),
            discarded_types: built.discarded.clone(),
            cleaning: ingested.report.clone(),
        },
        split: SplitSummary {
            train: split.train.len(),
            test: split.test.len(),
            train_class_counts: class_counts(&train),
            test_class_counts: class_counts(&test),
            flagged_neighborhoods: split.flagged_neighborhoods().map(String::from).collect(),
        },
        models,
        friedman,
        kde: kde_curves,
        tallies,
        foreign_grids: config.foreign_grids(),
    };
    emit_all(&report, out)?;
    timings.insert("total".into(), total.elapsed().as_secs_f64());
    write_json(&out.join("timings.json"), &timings)?;
    Ok(BenchmarkOutcome { report, timings })
}

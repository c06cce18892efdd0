//! Classifiers behind one fit/score interface.
//!
//! Five families are built in: k-nearest neighbors, a CART decision tree,
//! Gaussian naive Bayes, L1/L2 logistic regression and a random forest. Every
//! fitted model produces a class-1 score in `[0, 1]`; the label is 1 iff the
//! score reaches the decision threshold. Other learners can be plugged in by
//! implementing [`ModelFactory`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cube::{Dataset, FeatureRow};
use crate::matrix::FeatureMatrix;
use crate::Scalar;

pub mod forest;
pub mod gnb;
pub mod knn;
pub mod logreg;
pub mod params;
pub mod tree;

pub use forest::{ForestParams, MaxFeatures, RandomForest};
pub use gnb::{GaussianNb, GnbParams};
pub use knn::{KnnModel, KnnParams};
pub use logreg::{LogRegParams, LogisticObjective, LogisticRegression, Penalty};
pub use params::{format_params, ParamMap, ParamValue};
pub use tree::{Criterion, DecisionTree, Splitter, TreeNode, TreeParams};

pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("training set is empty")]
    EmptyTraining,
    #[error("{family} needs both classes in the training set")]
    SingleClass { family: String },
    #[error("non-finite feature value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("labels must be 0 or 1, found {0}")]
    BadLabel(u8),
    #[error("{rows} feature rows but {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("expected {expected} features per row, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("n_neighbors = {k} exceeds the {n} training rows")]
    TooFewRows { k: usize, n: usize },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: String, reason: String },
    #[error("unknown parameter `{name}` for {family}")]
    UnknownParam { family: String, name: String },
    #[error("loss became NaN at iteration {0}")]
    NanLoss(usize),
    #[error("unsupported model format version {0}")]
    FormatVersion(u32),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Knn,
    #[serde(alias = "dt")]
    Dtree,
    #[serde(alias = "nb")]
    Gnb,
    #[serde(alias = "lr")]
    Logreg,
    #[serde(alias = "rf")]
    Rforest,
}

impl Family {
    pub const ALL: [Family; 5] = [Family::Knn, Family::Dtree, Family::Gnb, Family::Logreg, Family::Rforest];

    pub fn name(self) -> &'static str {
        match self {
            Family::Knn => "knn",
            Family::Dtree => "dtree",
            Family::Gnb => "gnb",
            Family::Logreg => "logreg",
            Family::Rforest => "rforest",
        }
    }

    fn needs_both_classes(self) -> bool {
        self != Family::Knn
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(Family::name(*self))
    }
}

impl FromStr for Family {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "knn" => Ok(Family::Knn),
            "dtree" | "dt" => Ok(Family::Dtree),
            "gnb" | "nb" => Ok(Family::Gnb),
            "logreg" | "lr" => Ok(Family::Logreg),
            "rforest" | "rf" => Ok(Family::Rforest),
            other => Err(format!("unknown model family `{other}` (knn, dtree, gnb, logreg, rforest)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    #[serde(default)]
    pub params: ParamMap,
    #[serde(default)]
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(family: Family, params: ParamMap, seed: u64) -> Self {
        Self { family, params, seed }
    }

    /// Check the parameters against the family schema without fitting.
    pub fn validate(&self) -> Result<(), ModelError> {
        match self.family {
            Family::Knn => KnnParams::from_params(&self.params).map(drop),
            Family::Dtree => TreeParams::from_params(&self.params).map(drop),
            Family::Gnb => GnbParams::from_params(&self.params).map(drop),
            Family::Logreg => LogRegParams::from_params(&self.params).map(drop),
            Family::Rforest => ForestParams::from_params(&self.params).map(drop),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction<T> {
    pub label: u8,
    pub score: T,
}

/// Anything that turns one feature row into a class-1 score in `[0, 1]`.
pub trait Classifier<T: Scalar>: Send + Sync {
    fn arity(&self) -> usize;

    fn score_row(&self, row: &[T]) -> T;

    fn scores(&self, x: &FeatureMatrix<T>) -> Result<Vec<T>, ModelError> {
        check_arity(self.arity(), x.n_cols())?;
        Ok(x.rows().map(|r| self.score_row(r)).collect())
    }
}

/// Builds a fitted classifier from a parameter map; the hook grid search and
/// cross-validation use, so external learners can take part.
pub trait ModelFactory<T: Scalar>: Sync {
    fn name(&self) -> String;

    fn fit_boxed(&self, params: &ParamMap, seed: u64, x: &FeatureMatrix<T>, y: &[u8])
        -> Result<Box<dyn Classifier<T>>, ModelError>;
}

impl<T: Scalar> ModelFactory<T> for Family {
    fn name(&self) -> String {
        Family::name(*self).to_string()
    }

    fn fit_boxed(&self, params: &ParamMap, seed: u64, x: &FeatureMatrix<T>, y: &[u8])
        -> Result<Box<dyn Classifier<T>>, ModelError> {
        let spec = ModelSpec { family: *self, params: params.clone(), seed };
        Ok(Box::new(fit(&spec, x, y)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "state", rename_all = "lowercase")]
pub enum ModelState<T> {
    Knn(KnnModel<T>),
    Dtree(DecisionTree<T>),
    Gnb(GaussianNb<T>),
    Logreg(LogisticRegression<T>),
    Rforest(RandomForest<T>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel<T> {
    pub format_version: u32,
    pub params: ParamMap,
    pub seed: u64,
    pub arity: usize,
    pub n_train: usize,
    /// Fraction of class-1 rows in the training set.
    pub class_prior: f64,
    pub threshold: T,
    pub model: ModelState<T>,
}

pub(crate) fn check_arity(expected: usize, got: usize) -> Result<(), ModelError> {
    if expected == got {
        Ok(())
    } else {
        Err(ModelError::ArityMismatch { expected, got })
    }
}

/// Shared preconditions: non-empty, aligned, finite, binary labels.
pub(crate) fn check_training<T: Scalar>(x: &FeatureMatrix<T>, y: &[u8]) -> Result<[usize; 2], ModelError> {
    if x.n_rows() == 0 {
        return Err(ModelError::EmptyTraining);
    }
    if x.n_rows() != y.len() {
        return Err(ModelError::LengthMismatch { rows: x.n_rows(), labels: y.len() });
    }
    for (i, row) in x.rows().enumerate() {
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite { row: i, col: j });
        }
    }
    let mut counts = [0usize; 2];
    for &label in y {
        match label {
            0 | 1 => counts[label as usize] += 1,
            other => return Err(ModelError::BadLabel(other)),
        }
    }
    Ok(counts)
}

/// Train a model of `spec.family` on `(x, y)`. Deterministic in `(spec, x, y)`.
pub fn fit<T: Scalar>(spec: &ModelSpec, x: &FeatureMatrix<T>, y: &[u8]) -> Result<FittedModel<T>, ModelError> {
    let counts = check_training(x, y)?;
    if spec.family.needs_both_classes() && (counts[0] == 0 || counts[1] == 0) {
        return Err(ModelError::SingleClass { family: spec.family.to_string() });
    }
    let model = match spec.family {
        Family::Knn => ModelState::Knn(KnnModel::fit(&KnnParams::from_params(&spec.params)?, x, y)?),
        Family::Dtree => ModelState::Dtree(DecisionTree::fit(&TreeParams::from_params(&spec.params)?, spec.seed, x, y)?),
        Family::Gnb => ModelState::Gnb(GaussianNb::fit(&GnbParams::from_params(&spec.params)?, x, y)?),
        Family::Logreg => ModelState::Logreg(LogisticRegression::fit(&LogRegParams::from_params(&spec.params)?, x, y)?.model),
        Family::Rforest => ModelState::Rforest(RandomForest::fit(&ForestParams::from_params(&spec.params)?, spec.seed, x, y)?),
    };
    Ok(FittedModel {
        format_version: MODEL_FORMAT_VERSION,
        params: spec.params.clone(),
        seed: spec.seed,
        arity: x.n_cols(),
        n_train: y.len(),
        class_prior: counts[1] as f64 / y.len() as f64,
        threshold: T::of(DEFAULT_THRESHOLD),
        model,
    })
}

pub fn fit_dataset<T: Scalar>(spec: &ModelSpec, train: &Dataset<T>) -> Result<FittedModel<T>, ModelError> {
    fit(spec, &train.matrix(), &train.labels())
}

impl<T: Scalar> FittedModel<T> {
    pub fn family(&self) -> Family {
        match self.model {
            ModelState::Knn(_) => Family::Knn,
            ModelState::Dtree(_) => Family::Dtree,
            ModelState::Gnb(_) => Family::Gnb,
            ModelState::Logreg(_) => Family::Logreg,
            ModelState::Rforest(_) => Family::Rforest,
        }
    }

    pub fn predict(&self, x: &FeatureMatrix<T>) -> Result<Vec<Prediction<T>>, ModelError> {
        Ok(self
            .scores(x)?
            .into_iter()
            .map(|score| Prediction { label: u8::from(score >= self.threshold), score })
            .collect())
    }

    pub fn predict_rows(&self, rows: &[FeatureRow<T>]) -> Result<Vec<Prediction<T>>, ModelError> {
        let vectors: Vec<Vec<T>> = rows.iter().map(FeatureRow::input_vector).collect();
        let x = FeatureMatrix::from_rows(&vectors).unwrap_or_else(|| FeatureMatrix::from_vec(0, self.arity, vec![]));
        self.predict(&x)
    }

    pub fn to_json(&self) -> Result<String, ModelError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, ModelError> {
        let mut de = serde_json::Deserializer::from_str(s);
        de.disable_recursion_limit();
        let model = Self::deserialize(&mut de)?;
        de.end()?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(ModelError::FormatVersion(model.format_version));
        }
        Ok(model)
    }
}

impl<T: Scalar> Classifier<T> for FittedModel<T> {
    fn arity(&self) -> usize {
        self.arity
    }

    fn score_row(&self, row: &[T]) -> T {
        match &self.model {
            ModelState::Knn(m) => m.score_row(row),
            ModelState::Dtree(m) => m.score_row(row),
            ModelState::Gnb(m) => m.score_row(row),
            ModelState::Logreg(m) => m.score_row(row),
            ModelState::Rforest(m) => m.score_row(row),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (FeatureMatrix<f64>, Vec<u8>) {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, (i % 3) as f64]).collect();
        let y = (0..20).map(|i| u8::from(i >= 10)).collect();
        (FeatureMatrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn family_names_parse() {
        assert_eq!("rf".parse::<Family>().unwrap(), Family::Rforest);
        assert_eq!("DT".parse::<Family>().unwrap(), Family::Dtree);
        assert!("svm".parse::<Family>().is_err());
        for f in Family::ALL {
            assert_eq!(f.name().parse::<Family>().unwrap(), f);
        }
    }

    #[test]
    fn every_family_fits_scores_and_round_trips() {
        let (x, y) = toy();
        for family in Family::ALL {
            let model = fit(&ModelSpec::new(family, ParamMap::new(), 3), &x, &y).unwrap();
            let preds = model.predict(&x).unwrap();
            assert_eq!(preds.len(), 20);
            for p in &preds {
                assert!((0.0..=1.0).contains(&p.score), "{family}: {}", p.score);
                assert_eq!(p.label == 1, p.score >= 0.5);
            }
            let back = FittedModel::<f64>::from_json(&model.to_json().unwrap()).unwrap();
            assert_eq!(back.predict(&x).unwrap(), preds, "{family}");
            assert_eq!(back.family(), family);
        }
    }

    #[test]
    fn f32_models_work_too() {
        let (x, y) = toy();
        let rows: Vec<Vec<f32>> = x.rows().map(|r| r.iter().map(|&v| v as f32).collect()).collect();
        let x32 = FeatureMatrix::from_rows(&rows).unwrap();
        for family in Family::ALL {
            let model = fit(&ModelSpec::new(family, ParamMap::new(), 1), &x32, &y).unwrap();
            let acc = model.predict(&x32).unwrap().iter().zip(&y).filter(|(p, &t)| p.label == t).count();
            assert!(acc >= 15, "{family}: {acc}");
        }
    }

    #[test]
    fn fit_preconditions() {
        let (x, _) = toy();
        let ones = vec![1u8; 20];
        for family in [Family::Dtree, Family::Gnb, Family::Logreg, Family::Rforest] {
            assert!(matches!(fit(&ModelSpec::new(family, ParamMap::new(), 0), &x, &ones), Err(ModelError::SingleClass { .. })));
        }
        assert!(fit(&ModelSpec::new(Family::Knn, ParamMap::new(), 0), &x, &ones).is_ok());

        let bad = FeatureMatrix::from_rows(&[vec![1.0, f64::NAN], vec![0.0, 0.0]]).unwrap();
        assert!(matches!(
            fit(&ModelSpec::new(Family::Dtree, ParamMap::new(), 0), &bad, &[0, 1]),
            Err(ModelError::NonFinite { row: 0, col: 1 })
        ));
        let empty = FeatureMatrix::<f64>::from_vec(0, 2, vec![]);
        assert!(matches!(fit(&ModelSpec::new(Family::Knn, ParamMap::new(), 0), &empty, &[]), Err(ModelError::EmptyTraining)));
    }

    #[test]
    fn predict_rejects_wrong_arity() {
        let (x, y) = toy();
        let model = fit(&ModelSpec::new(Family::Gnb, ParamMap::new(), 0), &x, &y).unwrap();
        let wide = FeatureMatrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        assert!(matches!(model.predict(&wide), Err(ModelError::ArityMismatch { expected: 2, got: 3 })));
    }

    #[test]
    fn unknown_params_are_rejected() {
        let params = ParamMap::from([("depth".to_string(), ParamValue::Int(3))]);
        assert!(matches!(ModelSpec::new(Family::Dtree, params, 0).validate(), Err(ModelError::UnknownParam { .. })));
    }
}

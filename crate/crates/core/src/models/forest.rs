//! Random forest of CART trees with bootstrap sampling and per-node feature
//! subsampling. The score is the mean of the trees' class-1 leaf fractions.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::params::{ParamMap, ParamReader};
pub use super::tree::MaxFeatures;
use super::tree::{grow_tree, DecisionTree, TreeParams};
use super::ModelError;
use crate::matrix::FeatureMatrix;
use crate::rng::stream;
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub bootstrap: bool,
    pub tree: TreeParams,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_estimators: 100,
            bootstrap: true,
            tree: TreeParams { max_features: MaxFeatures::Sqrt, ..TreeParams::default() },
        }
    }
}

impl ForestParams {
    pub fn from_params(params: &ParamMap) -> Result<Self, ModelError> {
        let mut r = ParamReader::new("rforest", params);
        let n_estimators = r.usize_at_least(&["n_estimators"], 100, 1)?;
        let bootstrap = r.boolean(&["bootstrap"], true)?;
        let tree = TreeParams::read(&mut r, MaxFeatures::Sqrt, false)?;
        r.finish()?;
        Ok(Self { n_estimators, bootstrap, tree })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest<T> {
    pub trees: Vec<DecisionTree<T>>,
}

impl<T: Scalar> RandomForest<T> {
    /// Tree `t` draws from its own stream, so results do not depend on thread
    /// scheduling, and a one-tree forest without bootstrap equals the single
    /// tree fitted with the same seed.
    pub fn fit(params: &ForestParams, seed: u64, x: &FeatureMatrix<T>, y: &[u8]) -> Result<Self, ModelError> {
        let n = x.n_rows();
        let trees = (0..params.n_estimators)
            .into_par_iter()
            .map(|t| {
                let mut rng = stream(seed, &[t as u64]);
                let idx: Vec<usize> =
                    if params.bootstrap { (0..n).map(|_| rng.gen_range(0..n)).collect() } else { (0..n).collect() };
                grow_tree(&params.tree, &mut rng, x, y, idx)
            })
            .collect();
        Ok(Self { trees })
    }

    pub fn score_row(&self, row: &[T]) -> T {
        let total: T = self.trees.iter().map(|t| t.score_row(row)).sum();
        total / T::of_usize(self.trees.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ParamValue;

    fn data() -> (FeatureMatrix<f64>, Vec<u8>) {
        let rows: Vec<Vec<f64>> =
            (0..80).map(|i| vec![(i % 9) as f64, (i * 7 % 11) as f64, (i % 4) as f64, i as f64 / 10.0]).collect();
        let y = (0..80).map(|i| u8::from((i % 9) + (i % 4) > 6)).collect();
        (FeatureMatrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn single_tree_without_bootstrap_matches_decision_tree() {
        let (x, y) = data();
        let tree = TreeParams { max_features: MaxFeatures::All, max_depth: Some(4), ..Default::default() };
        let forest = ForestParams { n_estimators: 1, bootstrap: false, tree: tree.clone() };
        let f = RandomForest::fit(&forest, 17, &x, &y).unwrap();
        let t = DecisionTree::fit(&tree, 17, &x, &y).unwrap();
        assert_eq!(f.trees[0], t);
        for r in x.rows() {
            assert_eq!(f.score_row(r), t.score_row(r));
        }
    }

    #[test]
    fn same_seed_same_forest() {
        let (x, y) = data();
        let p = ForestParams { n_estimators: 12, ..Default::default() };
        assert_eq!(RandomForest::fit(&p, 3, &x, &y).unwrap(), RandomForest::fit(&p, 3, &x, &y).unwrap());
        assert_ne!(RandomForest::fit(&p, 3, &x, &y).unwrap(), RandomForest::fit(&p, 4, &x, &y).unwrap());
    }

    #[test]
    fn scores_are_mean_of_tree_scores() {
        let (x, y) = data();
        let f = RandomForest::fit(&ForestParams { n_estimators: 7, ..Default::default() }, 1, &x, &y).unwrap();
        let r = x.row(5);
        let mean = f.trees.iter().map(|t| t.score_row(r)).sum::<f64>() / 7.0;
        assert!((f.score_row(r) - mean).abs() < 1e-15);
    }

    #[test]
    fn params_from_table_values() {
        let m = ParamMap::from([
            ("max_depth".to_string(), ParamValue::Int(12)),
            ("bootstrap".into(), ParamValue::Bool(true)),
            ("n_estimators".into(), ParamValue::Int(100)),
            ("min_samples_leaf".into(), ParamValue::Int(1)),
            ("ccp_alpha".into(), ParamValue::Float(0.0)),
            ("criterion".into(), ParamValue::Str("gini".into())),
            ("max_features".into(), ParamValue::Str("log2".into())),
        ]);
        let p = ForestParams::from_params(&m).unwrap();
        assert_eq!(p.tree.max_depth, Some(12));
        assert_eq!(p.tree.max_features, MaxFeatures::Log2);
        assert!(ForestParams::from_params(&ParamMap::from([("splitter".to_string(), ParamValue::Str("best".into()))])).is_err());
    }
}

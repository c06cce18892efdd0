pub mod config;
pub mod cube;
pub mod ingest;
pub mod matrix;
pub mod metrics;
pub mod models;
pub mod report;
pub mod resample;
pub mod rng;
pub mod scalar;
pub mod synthgen;

pub use scalar::Scalar;

pub type Dataset64 = cube::Dataset<f64>;
pub type Dataset32 = cube::Dataset<f32>;
pub type FittedModel64 = models::FittedModel<f64>;
pub type FittedModel32 = models::FittedModel<f32>;
pub type FeatureMatrix64 = matrix::FeatureMatrix<f64>;
pub type FeatureMatrix32 = matrix::FeatureMatrix<f32>;

//! Early sepsis prediction on hourly EHR data.
//!
//! The pipeline runs ingestion, cleaning, masking and imputation, clinical
//! and windowed feature engineering, a histogram gradient-boosted tree
//! learner, normalized-utility evaluation, short-encounter routing and
//! tree-Shapley attribution. Numeric code is generic over [`Scalar`]
//! (`f32` or `f64`); the aliases below fix the common `f64` case.

pub mod cleaning;
pub mod evaluation;
pub mod features;
pub mod frame;
pub mod gbdt;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod preprocess;
pub mod rng;
pub mod scalar;
pub mod schema;
pub mod split;
pub mod synth;

pub use scalar::Scalar;

pub type Schema = schema::FeatureSchema<f64>;
pub type Encounter = model::EncounterSeries<f64>;
pub type Cohort = model::CohortFrame<f64>;
pub type Frame = frame::FeatureFrame<f64>;
pub type Matrix = features::FeatureMatrix<f64>;
pub type Model = gbdt::ModelArtifact<f64>;

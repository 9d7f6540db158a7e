//! End-to-end orchestration: configuration, encounter split, frozen
//! preprocessing, training of the full and non-statistical models, routing,
//! evaluation, explanation and the run manifest.

mod config;
mod explain;
mod io;
mod routing;
mod run;
mod split;
mod stages;

use std::fmt;

pub use config::{
    EvalConfig, FeaturesConfig, PathsConfig, ProspectiveConfig, RoutingPolicy, RunConfig, SchemaConfig, TrainConfig,
};
pub use explain::{explain_report, ExplainReport, FeatureShare};
pub use io::{read_matrix_csv, read_predictions_csv, write_matrix_csv, write_predictions_csv, PredictionRow};
pub use routing::{route_and_predict, Route, RoutedPredictions};
pub use run::{
    leakage_check, run_pipeline, stage_clean, stage_evaluate, stage_explain, stage_features, stage_ingest,
    stage_predict, stage_synth, stage_train, write_manifest, LeakageCheck, RunSummary, ARTIFACTS, FAILED_MARKER,
    MANIFEST,
};
pub use split::{stratified_split, SplitSummary};
pub use stages::{
    apply_features, fit_features, fit_pruning, prepare_cohort, train_models, FeatureState, FittedFeatures,
    TrainedModels,
};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    /// Bad configuration or input caught before computation.
    #[error("validation error: {0}")]
    Validation(String),
    #[error("stage `{stage}` failed: {message}")]
    Stage { stage: String, message: String },
}

impl PipelineError {
    pub fn stage(stage: &str, message: impl fmt::Display) -> Self {
        Self::Stage {
            stage: stage.to_string(),
            message: message.to_string(),
        }
    }

    /// Process exit code: 2 for validation errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => 2,
            Self::Stage { .. } => 1,
        }
    }

    pub fn stage_name(&self) -> &str {
        match self {
            Self::Validation(_) => "validate",
            Self::Stage { stage, .. } => stage,
        }
    }
}

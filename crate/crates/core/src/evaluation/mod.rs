//! Normalized utility, encounter-level outcomes, metric panels and
//! threshold sweeps.

mod outcomes;
mod report;
mod utility;

pub use outcomes::{encounter_outcome, metrics_panel, EncounterOutcome, MetricsPanel, DEFAULT_SUCCESS_WINDOW};
pub use report::{default_thresholds, threshold_sweep, CohortCounts, EvaluationReport, ScoredEncounter};
pub use utility::{hour_utility, normalized_utility, optimal_predictions, utility_per_patient, UtilityParams};

use crate::model::ModelError;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("encounter {encounter_id}: {labels} labels but {predictions} predictions")]
    LengthMismatch {
        encounter_id: u64,
        labels: usize,
        predictions: usize,
    },
    #[error(transparent)]
    Labels(#[from] ModelError),
    #[error("normalization undefined: optimal utility equals inaction utility")]
    NormalizationUndefined,
    #[error("invalid utility parameters: {0}")]
    InvalidParams(String),
    #[error("invalid thresholds: {0}")]
    InvalidThresholds(String),
    #[error("no encounters to evaluate")]
    Empty,
    #[error("probability {value} outside [0, 1] in encounter {encounter_id}")]
    Probability { encounter_id: u64, value: f64 },
    #[error("{0}")]
    Io(String),
}

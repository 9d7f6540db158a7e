//! Histogram gradient-boosted decision trees for binary log loss, with
//! native missing-value handling, a checksummed model format, permutation
//! importance and tree Shapley attribution.

mod artifact;
mod binning;
mod importance;
mod loss;
mod params;
mod shap;
mod train;
mod tree;

use thiserror::Error;

use crate::frame::FrameError;

pub use artifact::{ModelArtifact, TrainMeta, FORMAT_VERSION};
pub use binning::{feature_edges, quantile_bin, BinMapper, BinnedMatrix};
pub use importance::{permutation_importance, permutation_importance_for, FeatureImportance, ImportanceMetric};
pub use loss::{auroc, logloss_grad_hess, logloss_one, mean_logloss_from_margins, weighted_grad_hess, weighted_mean_logloss};
pub use params::{LrDecay, TrainParams};
pub use shap::{expected_margin, shap_attributions, shap_frame, ShapValues};
pub use train::{train, LossTrace};
pub use tree::{Node, Tree};

#[derive(Debug, Error)]
pub enum GbdtError {
    #[error("no rows")]
    EmptyData,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("feature layout: {0}")]
    FeatureLayout(String),
    #[error("model lacks per-node cover counts")]
    MissingCover,
    #[error("metric undefined: {0}")]
    MetricUndefined(&'static str),
    #[error("checksum failure: {0}")]
    Checksum(String),
    #[error("unsupported model format version `{0}`")]
    UnsupportedVersion(String),
    #[error("malformed model: {0}")]
    Malformed(String),
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Frame(#[from] FrameError),
}

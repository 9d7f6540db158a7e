//! Collinearity pruning, missingness masks and per-encounter imputation.

mod correlation;
mod impute;
mod ward;

use thiserror::Error;

use crate::schema::SchemaError;

pub use correlation::{correlation_matrix, missing_fractions, CorrelationMatrix};
pub use impute::{
    back_fill_leading, build_masks, forward_fill, impute, interpolate_linear, mask_name, ImputePolicy,
};
pub use ward::{ward_cluster_prune, ClusterPruneResult, LinkageStep};

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("need at least two features, got {0}")]
    TooFewFeatures(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("unknown imputation policy `{0}`")]
    UnknownPolicy(String),
    #[error(transparent)]
    Schema(#[from] SchemaError),
}

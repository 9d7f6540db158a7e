//! Clinical scores, ratio features, trailing-window statistics, label
//! shifting, statistical-feature selection and feature-matrix assembly.

mod bands;
mod clinical;
mod labels;
mod matrix;
mod select;
mod window;

use thiserror::Error;

use crate::frame::FrameError;
use crate::model::ModelError;
use crate::schema::SchemaError;

pub use bands::{Band, BandTable, BandTables, Bound};
pub use clinical::{
    clinical_columns, fio2_fraction, ratio_features, score_mews, score_partial_sofa, score_qsofa, score_sirs,
    ClinicalRow, ComponentResolver, Ratios, CLINICAL_COLUMNS, COMPONENTS,
};
pub use labels::{shift_labels, DEFAULT_HORIZON};
pub use matrix::{assemble_feature_matrix, assemble_with_tables, Bookkeeping, FeatureMatrix, FeatureSelections, MatrixBlocks};
pub use select::{select_statistical_features, SelectionConfig, SelectionReport};
pub use window::{window_statistic, windowed_stats, Statistic, WindowSpec};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("unknown statistic `{0}`")]
    UnknownStatistic(String),
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    #[error("negative label horizon {0}")]
    NegativeHorizon(i64),
    #[error("band table {table}, line {line}: {message}")]
    BandTable { table: String, line: usize, message: String },
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("shape: {0}")]
    Shape(String),
    #[error("validation split is empty")]
    EmptyValidation,
    #[error("{0}")]
    Io(String),
    #[error("model: {0}")]
    Model(String),
    #[error(transparent)]
    Labels(#[from] ModelError),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Schema(#[from] SchemaError),
}

use serde::{Deserialize, Serialize};

use super::config::{FeaturesConfig, TrainConfig};
use super::PipelineError;
use crate::features::{
    assemble_feature_matrix, select_statistical_features, Bookkeeping, FeatureSelections, MatrixBlocks,
    SelectionReport, WindowSpec,
};
use crate::gbdt::{quantile_bin, train, LossTrace, TrainParams};
use crate::preprocess::{
    build_masks, correlation_matrix, impute, missing_fractions, ward_cluster_prune, ClusterPruneResult, ImputePolicy,
};
use crate::rng::sub_seed;
use crate::{Cohort, Matrix, Model};

/// Everything fitted on the training split that later splits reuse as is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureState {
    /// Pruned base features in schema order.
    pub representatives: Vec<String>,
    pub impute: ImputePolicy,
    pub window: WindowSpec,
    pub horizon: i64,
    pub statistical_candidates: usize,
    pub selected: Vec<String>,
    pub blocks: MatrixBlocks,
}

#[derive(Debug, Clone)]
pub struct FittedFeatures {
    pub state: FeatureState,
    pub prune: ClusterPruneResult<f64>,
    pub missing_fractions: Vec<(String, f64)>,
    pub selection: SelectionReport<f64>,
    pub bookkeeping: Bookkeeping,
    /// Training matrix already narrowed to the selected statistics.
    pub train_matrix: Matrix,
}

/// Correlation clustering over every vital and lab column of `cohort`.
/// Representatives come back in schema order.
pub fn fit_pruning(cohort: &Cohort, cutoff: f64) -> Result<(ClusterPruneResult<f64>, Vec<f64>), PipelineError> {
    let err = |e: crate::preprocess::PreprocessError| PipelineError::stage("preprocess", e);
    let schema = cohort.schema();
    let features = schema.measurement_names();
    let missing = missing_fractions(cohort, &features).map_err(err)?;
    let corr = correlation_matrix(cohort, &features).map_err(err)?;
    let mut prune = ward_cluster_prune(&corr, cutoff, &missing).map_err(err)?;
    prune.representatives.sort_by_key(|r| schema.index_of(r));
    Ok((prune, missing))
}

/// Masks then imputes the given base features.
pub fn prepare_cohort(cohort: &Cohort, features: &[String], policy: ImputePolicy) -> Result<Cohort, PipelineError> {
    let masked = build_masks(cohort, features).map_err(|e| PipelineError::stage("preprocess", e))?;
    Ok(impute(&masked, policy))
}

/// Fits pruning and statistical-feature selection on the training cohort.
pub fn fit_features(train: &Cohort, cfg: &FeaturesConfig, seed: u64) -> Result<FittedFeatures, PipelineError> {
    let (prune, missing) = fit_pruning(train, cfg.ward_cutoff)?;
    let representatives = prune.representatives.clone();
    let prepared = prepare_cohort(train, &representatives, cfg.impute)?;
    let candidates = cfg.window.candidate_names(&representatives);
    let selections = FeatureSelections {
        original: representatives.clone(),
        statistical: candidates.clone(),
    };
    let ferr = |e: crate::features::FeatureError| PipelineError::stage("features", e);
    let (all, _) = assemble_feature_matrix(&prepared, &selections, &cfg.window, cfg.horizon).map_err(ferr)?;
    log::info!("feature matrix: {} rows, {} columns", all.n_rows(), all.frame.n_columns());
    let selection = select_statistical_features(&all, &cfg.selection, sub_seed(seed, "selection"))
        .map_err(|e| PipelineError::stage("selection", e))?;
    let train_matrix = all.with_statistical(&selection.selected).map_err(ferr)?;
    let bookkeeping = train_matrix.bookkeeping(candidates.len());
    let features = train.schema().measurement_names();
    Ok(FittedFeatures {
        state: FeatureState {
            representatives,
            impute: cfg.impute,
            window: cfg.window.clone(),
            horizon: cfg.horizon,
            statistical_candidates: candidates.len(),
            selected: selection.selected.clone(),
            blocks: train_matrix.blocks.clone(),
        },
        prune,
        missing_fractions: features.into_iter().zip(missing).collect(),
        selection,
        bookkeeping,
        train_matrix,
    })
}

/// Builds a matrix for any cohort from frozen training-split state.
pub fn apply_features(cohort: &Cohort, state: &FeatureState) -> Result<Matrix, PipelineError> {
    let prepared = prepare_cohort(cohort, &state.representatives, state.impute)?;
    let selections = FeatureSelections {
        original: state.representatives.clone(),
        statistical: state.selected.clone(),
    };
    let (m, _) = assemble_feature_matrix(&prepared, &selections, &state.window, state.horizon)
        .map_err(|e| PipelineError::stage("features", e))?;
    if m.blocks != state.blocks {
        return Err(PipelineError::stage("features", "assembled columns differ from the frozen layout"));
    }
    Ok(m)
}

#[derive(Debug, Clone)]
pub struct TrainedModels {
    pub full: Model,
    pub full_trace: LossTrace,
    pub nonstat: Model,
    pub nonstat_trace: LossTrace,
}

fn fit(matrix: &Matrix, columns: &[String], params: &TrainParams, stage: &str) -> Result<(Model, LossTrace), PipelineError> {
    let frame = matrix.frame.select(columns).map_err(|e| PipelineError::stage(stage, e))?;
    let binned = quantile_bin(&frame, params.max_bins).map_err(|e| PipelineError::stage(stage, e))?;
    let (model, trace) = train(&binned, &matrix.shifted_labels, params, None).map_err(|e| PipelineError::stage(stage, e))?;
    for w in &trace.warnings {
        log::warn!("{stage}: {w}");
    }
    Ok((model, trace))
}

/// Trains the full model on every matrix column and the non-statistical
/// model on everything but the statistical block, both on shifted labels.
pub fn train_models(matrix: &Matrix, cfg: &TrainConfig, seed: u64) -> Result<TrainedModels, PipelineError> {
    let full_params = TrainParams {
        seed: sub_seed(seed, "train:full"),
        ..cfg.full.clone()
    };
    let nonstat_params = TrainParams {
        seed: sub_seed(seed, "train:nonstat"),
        ..cfg.nonstat.clone()
    };
    let (full, full_trace) = fit(matrix, &matrix.blocks.ordered(), &full_params, "train")?;
    let (nonstat, nonstat_trace) = fit(matrix, &matrix.blocks.non_statistical(), &nonstat_params, "train")?;
    Ok(TrainedModels {
        full,
        full_trace,
        nonstat,
        nonstat_trace,
    })
}

//! Statistical-feature selection by permutation importance.

use serde::{Deserialize, Serialize};

use super::matrix::FeatureMatrix;
use super::FeatureError;
use crate::gbdt::{permutation_importance_for, quantile_bin, train, FeatureImportance, ImportanceMetric, TrainParams};
use crate::rng::sub_seed;
use crate::scalar::Scalar;
use crate::split::stratified_assign;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    /// Share of encounters held out for importance.
    pub validation_fraction: f64,
    pub repeats: usize,
    pub metric: ImportanceMetric,
    /// Keep exactly this many (highest mean importance) instead of every
    /// feature with positive importance.
    pub top_k: Option<usize>,
    pub params: TrainParams,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            validation_fraction: 0.2,
            repeats: 5,
            metric: ImportanceMetric::NegLogLoss,
            top_k: None,
            params: TrainParams {
                rounds: 100,
                initial_learning_rate: 0.1,
                ..Default::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SelectionReport<T> {
    pub candidates: usize,
    pub selected: Vec<String>,
    pub importances: Vec<FeatureImportance<T>>,
    pub train_encounters: usize,
    pub validation_encounters: usize,
    pub top_k: Option<usize>,
}

/// Fits the learner on a training share of encounters (targets: shifted
/// labels) and keeps statistical columns whose mean permutation importance
/// on the held-out share is positive. Deterministic for a fixed seed.
pub fn select_statistical_features<T: Scalar>(
    matrix: &FeatureMatrix<T>,
    config: &SelectionConfig,
    seed: u64,
) -> Result<SelectionReport<T>, FeatureError> {
    let candidates = matrix.blocks.statistical.clone();
    if candidates.is_empty() {
        return Ok(SelectionReport {
            candidates: 0,
            selected: Vec::new(),
            importances: Vec::new(),
            train_encounters: 0,
            validation_encounters: 0,
            top_k: config.top_k,
        });
    }
    if !(config.validation_fraction > 0.0 && config.validation_fraction < 1.0) {
        return Err(FeatureError::Shape("validation_fraction must be in (0, 1)".into()));
    }
    let ranges = matrix.encounter_ranges();
    let positive: Vec<bool> = ranges
        .iter()
        .map(|(_, r)| matrix.shifted_labels[r.clone()].contains(&1))
        .collect();
    let held_out = stratified_assign(&positive, config.validation_fraction, seed, "selection-split");
    let (mut train_rows, mut val_rows) = (Vec::new(), Vec::new());
    for ((_, r), &v) in ranges.iter().zip(&held_out) {
        if v {
            val_rows.extend(r.clone());
        } else {
            train_rows.extend(r.clone());
        }
    }
    if val_rows.is_empty() {
        return Err(FeatureError::EmptyValidation);
    }
    if train_rows.is_empty() {
        return Err(FeatureError::Shape("training split is empty".into()));
    }
    let train_frame = matrix.frame.take_rows(&train_rows);
    let train_labels: Vec<u8> = train_rows.iter().map(|&r| matrix.shifted_labels[r]).collect();
    let val_frame = matrix.frame.take_rows(&val_rows);
    let val_labels: Vec<u8> = val_rows.iter().map(|&r| matrix.shifted_labels[r]).collect();

    let params = TrainParams {
        seed: sub_seed(seed, "selection-model"),
        ..config.params.clone()
    };
    let binned = quantile_bin(&train_frame, params.max_bins).map_err(gbdt_err)?;
    let (model, _) = train(&binned, &train_labels, &params, None).map_err(gbdt_err)?;
    let importances = permutation_importance_for(
        &model,
        &val_frame,
        &val_labels,
        config.metric,
        config.repeats,
        sub_seed(seed, "permutation"),
        &candidates,
    )
    .map_err(gbdt_err)?;

    let selected = match config.top_k {
        None => importances
            .iter()
            .filter(|i| i.mean > T::zero())
            .map(|i| i.name.clone())
            .collect(),
        Some(k) => {
            let mut ranked: Vec<&FeatureImportance<T>> = importances.iter().collect();
            ranked.sort_by(|a, b| {
                b.mean
                    .partial_cmp(&a.mean)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then_with(|| a.name.cmp(&b.name))
            });
            let keep: Vec<&str> = ranked.iter().take(k).map(|i| i.name.as_str()).collect();
            // Report in block order.
            candidates.iter().filter(|c| keep.contains(&c.as_str())).cloned().collect()
        }
    };
    Ok(SelectionReport {
        candidates: candidates.len(),
        selected,
        importances,
        train_encounters: held_out.iter().filter(|&&v| !v).count(),
        validation_encounters: held_out.iter().filter(|&&v| v).count(),
        top_k: config.top_k,
    })
}

fn gbdt_err(e: crate::gbdt::GbdtError) -> FeatureError {
    FeatureError::Model(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::MatrixBlocks;
    use crate::frame::FeatureFrame;
    use rand::{Rng, SeedableRng};

    /// Encounters of 10 rows; `signal` tracks the label, `noise` does not.
    fn matrix(n_enc: usize, seed: u64) -> FeatureMatrix<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let (mut ids, mut hours, mut y, mut signal, mut noise, mut base) = (vec![], vec![], vec![], vec![], vec![], vec![]);
        for e in 0..n_enc {
            let septic = rng.random::<f64>() < 0.3;
            for t in 0..10 {
                let label = u8::from(septic && t >= 4);
                ids.push(e as u64);
                hours.push(t);
                y.push(label);
                signal.push(label as f64 + rng.random_range(-1.0..1.0));
                noise.push(rng.random_range(-1.0..1.0));
                base.push(rng.random_range(-1.0..1.0));
            }
        }
        let n = y.len();
        let frame = FeatureFrame::from_columns(
            n,
            vec![("base".into(), base), ("slope_signal".into(), signal), ("var_noise".into(), noise)],
        )
        .unwrap();
        FeatureMatrix {
            frame,
            encounter_ids: ids,
            hours,
            labels: y.clone(),
            shifted_labels: y,
            blocks: MatrixBlocks {
                original: vec!["base".into()],
                statistical: vec!["slope_signal".into(), "var_noise".into()],
                ..Default::default()
            },
        }
    }

    fn cfg() -> SelectionConfig {
        SelectionConfig {
            params: TrainParams {
                rounds: 20,
                initial_learning_rate: 0.2,
                max_depth: 2,
                max_bins: 32,
                min_child_weight: 20.0,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn signal_kept_noise_often_dropped() {
        let m = matrix(200, 1);
        let mut excluded = 0;
        for seed in 0..20 {
            let r = select_statistical_features(&m, &cfg(), seed).unwrap();
            assert!(r.selected.contains(&"slope_signal".to_string()), "seed {seed}");
            if !r.selected.contains(&"var_noise".to_string()) {
                excluded += 1;
            }
        }
        assert!(excluded as f64 / 20.0 > 0.4, "noise excluded in {excluded}/20 runs");
    }

    #[test]
    fn deterministic_and_top_k() {
        let m = matrix(100, 2);
        let a = select_statistical_features(&m, &cfg(), 5).unwrap();
        assert_eq!(a, select_statistical_features(&m, &cfg(), 5).unwrap());
        let forced = select_statistical_features(&m, &SelectionConfig { top_k: Some(2), ..cfg() }, 5).unwrap();
        assert_eq!(forced.selected, vec!["slope_signal".to_string(), "var_noise".to_string()]);
    }

    #[test]
    fn empty_block_and_empty_validation() {
        let mut m = matrix(20, 3);
        let none = m.with_statistical(&[]).unwrap();
        let r = select_statistical_features(&none, &cfg(), 1).unwrap();
        assert!(r.selected.is_empty());
        m = m.take_encounters(|id| id == 0);
        assert!(matches!(select_statistical_features(&m, &cfg(), 1), Err(FeatureError::EmptyValidation)));
    }
}

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::model::onset_of_labels;
use crate::scalar::Scalar;

/// Piecewise-linear reward around onset. Offsets are hours relative to the
/// onset hour of the original labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UtilityParams {
    pub dt_early: f64,
    pub dt_optimal: f64,
    pub dt_late: f64,
    pub max_u_tp: f64,
    pub u_fp: f64,
    pub min_u_fn: f64,
    pub u_tn: f64,
}

impl Default for UtilityParams {
    fn default() -> Self {
        Self {
            dt_early: -12.0,
            dt_optimal: -6.0,
            dt_late: 3.0,
            max_u_tp: 1.0,
            u_fp: -0.05,
            min_u_fn: -2.0,
            u_tn: 0.0,
        }
    }
}

impl UtilityParams {
    pub fn validate(&self) -> Result<(), EvalError> {
        let ok = self.dt_early < self.dt_optimal
            && self.dt_optimal < self.dt_late
            && self.max_u_tp > 0.0
            && self.u_fp < 0.0
            && self.min_u_fn < 0.0
            && [self.dt_early, self.dt_optimal, self.dt_late, self.max_u_tp, self.u_fp, self.min_u_fn, self.u_tn]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(EvalError::InvalidParams(format!("{self:?}")))
        }
    }
}

/// Utility of one hour given the onset (if septic) and the prediction.
pub fn hour_utility<T: Scalar>(hour: usize, onset: Option<usize>, positive: bool, p: &UtilityParams) -> T {
    let Some(onset) = onset else {
        return T::of(if positive { p.u_fp } else { p.u_tn });
    };
    let dt = hour as f64 - onset as f64;
    if dt > p.dt_late {
        return T::zero();
    }
    let up = p.max_u_tp / (p.dt_optimal - p.dt_early);
    let down = -p.max_u_tp / (p.dt_late - p.dt_optimal);
    let miss = p.min_u_fn / (p.dt_late - p.dt_optimal);
    let u = match (positive, dt <= p.dt_optimal) {
        (true, true) => (up * (dt - p.dt_early)).max(p.u_fp),
        (true, false) => p.max_u_tp + down * (dt - p.dt_optimal),
        (false, true) => 0.0,
        (false, false) => miss * (dt - p.dt_optimal),
    };
    T::of(u)
}

fn checked_onset(encounter_id: u64, labels: &[u8], n_pred: usize) -> Result<Option<usize>, EvalError> {
    if labels.len() != n_pred {
        return Err(EvalError::LengthMismatch {
            encounter_id,
            labels: labels.len(),
            predictions: n_pred,
        });
    }
    Ok(onset_of_labels(encounter_id, labels)?)
}

/// Summed utility of one encounter's binary predictions.
pub fn utility_per_patient<T: Scalar>(labels: &[u8], predictions: &[bool], params: &UtilityParams) -> Result<T, EvalError> {
    let onset = checked_onset(0, labels, predictions.len())?;
    Ok(predictions
        .iter()
        .enumerate()
        .map(|(t, &y)| hour_utility::<T>(t, onset, y, params))
        .sum())
}

/// Per-hour utility-maximizing predictions (ties go negative).
pub fn optimal_predictions(labels: &[u8], params: &UtilityParams) -> Result<Vec<bool>, EvalError> {
    let onset = checked_onset(0, labels, labels.len())?;
    Ok((0..labels.len())
        .map(|t| hour_utility::<f64>(t, onset, true, params) > hour_utility::<f64>(t, onset, false, params))
        .collect())
}

/// `(U_observed - U_inaction) / (U_optimal - U_inaction)` over a cohort of
/// `(labels, predictions)` pairs.
pub fn normalized_utility<T: Scalar>(cohort: &[(&[u8], &[bool])], params: &UtilityParams) -> Result<T, EvalError> {
    params.validate()?;
    let per: Vec<[T; 3]> = cohort
        .par_iter()
        .enumerate()
        .map(|(i, (labels, preds))| {
            let onset = checked_onset(i as u64, labels, preds.len())?;
            let mut acc = [T::zero(); 3];
            for (t, &y) in preds.iter().enumerate() {
                let pos = hour_utility::<T>(t, onset, true, params);
                let neg = hour_utility::<T>(t, onset, false, params);
                acc[0] += if y { pos } else { neg };
                acc[1] += neg;
                acc[2] += if pos > neg { pos } else { neg };
            }
            Ok(acc)
        })
        .collect::<Result<_, EvalError>>()?;
    let mut sums = [T::zero(); 3];
    for a in &per {
        for k in 0..3 {
            sums[k] += a[k];
        }
    }
    let [observed, inaction, optimal] = sums;
    if optimal == inaction {
        return Err(EvalError::NormalizationUndefined);
    }
    Ok((observed - inaction) / (optimal - inaction))
}

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::model::onset_of_labels;
use crate::scalar::Scalar;

pub const DEFAULT_SUCCESS_WINDOW: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncounterOutcome {
    pub encounter_id: u64,
    pub septic: bool,
    pub flagged: bool,
    pub success: bool,
    pub first_flag_hour: Option<usize>,
    /// Onset minus first flag hour; set only for successful septic encounters.
    pub timeliness_hours: Option<i64>,
}

/// Flags are probabilities strictly above `threshold`. A septic encounter
/// succeeds with a flag in `[onset - window, onset]`; a non-septic one
/// succeeds when never flagged.
pub fn encounter_outcome<T: Scalar>(
    encounter_id: u64,
    labels: &[u8],
    probabilities: &[T],
    threshold: T,
    success_window: usize,
) -> Result<EncounterOutcome, EvalError> {
    if labels.len() != probabilities.len() {
        return Err(EvalError::LengthMismatch {
            encounter_id,
            labels: labels.len(),
            predictions: probabilities.len(),
        });
    }
    let onset = onset_of_labels(encounter_id, labels)?;
    let first_flag_hour = probabilities.iter().position(|&p| p > threshold);
    let flagged = first_flag_hour.is_some();
    let success = match onset {
        Some(o) => (o.saturating_sub(success_window)..=o).any(|t| probabilities[t] > threshold),
        None => !flagged,
    };
    let timeliness_hours = match (onset, first_flag_hour) {
        (Some(o), Some(f)) if success => Some(o as i64 - f as i64),
        _ => None,
    };
    Ok(EncounterOutcome {
        encounter_id,
        septic: onset.is_some(),
        flagged,
        success,
        first_flag_hour,
        timeliness_hours,
    })
}

/// Encounter-level metrics at one threshold. Ratios with an empty
/// denominator are absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsPanel {
    pub threshold: f64,
    pub normalized_utility: Option<f64>,
    pub f1: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub flag_rate: f64,
    /// Flagged non-septic over all flagged encounters.
    pub false_flag_fraction: Option<f64>,
    /// Flagged non-septic over all non-septic encounters.
    pub false_positive_rate: Option<f64>,
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
    pub median_timeliness: Option<i64>,
    pub encounters: usize,
    pub septic: usize,
    pub flagged: usize,
    pub septic_success: usize,
    pub flagged_non_septic: usize,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn metrics_panel(outcomes: &[EncounterOutcome], threshold: f64) -> Result<MetricsPanel, EvalError> {
    if outcomes.is_empty() {
        return Err(EvalError::Empty);
    }
    let n = outcomes.len();
    let septic = outcomes.iter().filter(|o| o.septic).count();
    let flagged = outcomes.iter().filter(|o| o.flagged).count();
    let septic_success = outcomes.iter().filter(|o| o.septic && o.success).count();
    let flagged_non_septic = outcomes.iter().filter(|o| !o.septic && o.flagged).count();
    let unflagged = n - flagged;
    let unflagged_non_septic = outcomes.iter().filter(|o| !o.septic && !o.flagged).count();

    let sensitivity = ratio(septic_success, septic);
    let ppv = ratio(septic_success, flagged);
    let f1 = match (ppv, sensitivity) {
        (Some(p), Some(s)) if p + s > 0.0 => Some(2.0 * p * s / (p + s)),
        (_, Some(_)) => Some(0.0),
        _ => None,
    };
    let mut times: Vec<i64> = outcomes.iter().filter_map(|o| o.timeliness_hours).collect();
    times.sort_unstable();
    let median_timeliness = (!times.is_empty()).then(|| times[(times.len() - 1) / 2]);
    Ok(MetricsPanel {
        threshold,
        normalized_utility: None,
        f1,
        sensitivity,
        specificity: ratio(unflagged_non_septic, n - septic),
        flag_rate: flagged as f64 / n as f64,
        false_flag_fraction: ratio(flagged_non_septic, flagged),
        false_positive_rate: ratio(flagged_non_septic, n - septic),
        ppv,
        npv: ratio(unflagged_non_septic, unflagged),
        median_timeliness,
        encounters: n,
        septic,
        flagged,
        septic_success,
        flagged_non_septic,
    })
}

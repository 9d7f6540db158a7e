use super::FeatureError;
use crate::model::{onset_of_labels, EncounterId};

pub const DEFAULT_HORIZON: i64 = 6;

/// `shifted[t] = labels[min(t + horizon, n - 1)]`: positives start at
/// `max(0, onset - horizon)`.
pub fn shift_labels(encounter_id: EncounterId, labels: &[u8], horizon: i64) -> Result<Vec<u8>, FeatureError> {
    if horizon < 0 {
        return Err(FeatureError::NegativeHorizon(horizon));
    }
    let onset = onset_of_labels(encounter_id, labels)?;
    let h = horizon as usize;
    Ok((0..labels.len())
        .map(|t| match onset {
            Some(o) if t + h >= o => 1,
            _ => 0,
        })
        .collect())
}

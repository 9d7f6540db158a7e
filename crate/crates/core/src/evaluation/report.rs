use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::outcomes::{encounter_outcome, metrics_panel, MetricsPanel};
use super::utility::{normalized_utility, UtilityParams};
use super::EvalError;
use crate::model::onset_of_labels;
use crate::scalar::Scalar;

pub const REPORT_FORMAT: &str = "sepsis-evaluation";
pub const REPORT_VERSION: u32 = 1;

/// One encounter's original labels and predicted probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredEncounter<T> {
    pub encounter_id: u64,
    pub labels: Vec<u8>,
    pub probabilities: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortCounts {
    pub encounters: usize,
    pub septic_encounters: usize,
    pub rows: usize,
    pub positive_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub format: String,
    pub version: u32,
    pub utility_params: UtilityParams,
    pub success_window_hours: usize,
    pub counts: CohortCounts,
    pub panels: Vec<MetricsPanel>,
    /// Threshold with the highest normalized utility (lowest on ties).
    pub best_threshold: Option<f64>,
}

impl EvaluationReport {
    pub fn best_panel(&self) -> Option<&MetricsPanel> {
        let t = self.best_threshold?;
        self.panels.iter().find(|p| p.threshold == t)
    }

    pub fn to_text(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_text(text: &str) -> Result<Self, EvalError> {
        serde_json::from_str(text).map_err(|e| EvalError::Io(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), EvalError> {
        std::fs::write(path, self.to_text()).map_err(|e| EvalError::Io(format!("{}: {e}", path.display())))
    }
}

/// 0.1, 0.2, ..., 0.9.
pub fn default_thresholds() -> Vec<f64> {
    (1..=9).map(|k| k as f64 / 10.0).collect()
}

fn check_thresholds(thresholds: &[f64]) -> Result<(), EvalError> {
    if thresholds.is_empty() {
        return Err(EvalError::InvalidThresholds("empty threshold list".into()));
    }
    if thresholds.iter().any(|&t| !(t > 0.0 && t < 1.0)) {
        return Err(EvalError::InvalidThresholds("thresholds must lie in (0, 1)".into()));
    }
    if thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(EvalError::InvalidThresholds("thresholds must be strictly increasing".into()));
    }
    Ok(())
}

/// One panel per threshold, each carrying the normalized utility of the
/// binary predictions `p > threshold` (absent when normalization is
/// undefined for the cohort).
pub fn threshold_sweep<T: Scalar>(
    cohort: &[ScoredEncounter<T>],
    thresholds: &[f64],
    params: &UtilityParams,
    success_window: usize,
) -> Result<EvaluationReport, EvalError> {
    check_thresholds(thresholds)?;
    params.validate()?;
    if cohort.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut counts = CohortCounts {
        encounters: cohort.len(),
        septic_encounters: 0,
        rows: 0,
        positive_rows: 0,
    };
    for e in cohort {
        if e.labels.len() != e.probabilities.len() {
            return Err(EvalError::LengthMismatch {
                encounter_id: e.encounter_id,
                labels: e.labels.len(),
                predictions: e.probabilities.len(),
            });
        }
        if let Some(&bad) = e.probabilities.iter().find(|p| !(**p >= T::zero() && **p <= T::one())) {
            return Err(EvalError::Probability {
                encounter_id: e.encounter_id,
                value: bad.as_f64(),
            });
        }
        if onset_of_labels(e.encounter_id, &e.labels)?.is_some() {
            counts.septic_encounters += 1;
        }
        counts.rows += e.labels.len();
        counts.positive_rows += e.labels.iter().filter(|&&y| y == 1).count();
    }

    let panels = thresholds
        .par_iter()
        .map(|&thr| {
            let t = T::of(thr);
            let outcomes = cohort
                .iter()
                .map(|e| encounter_outcome(e.encounter_id, &e.labels, &e.probabilities, t, success_window))
                .collect::<Result<Vec<_>, _>>()?;
            let mut panel = metrics_panel(&outcomes, thr)?;
            let binary: Vec<Vec<bool>> = cohort.iter().map(|e| e.probabilities.iter().map(|&p| p > t).collect()).collect();
            let pairs: Vec<(&[u8], &[bool])> = cohort.iter().zip(&binary).map(|(e, b)| (e.labels.as_slice(), b.as_slice())).collect();
            panel.normalized_utility = match normalized_utility::<T>(&pairs, params) {
                Ok(u) => Some(u.as_f64()),
                Err(EvalError::NormalizationUndefined) => None,
                Err(e) => return Err(e),
            };
            Ok(panel)
        })
        .collect::<Result<Vec<_>, EvalError>>()?;

    let mut best: Option<(f64, f64)> = None;
    for p in &panels {
        if let Some(u) = p.normalized_utility {
            if best.is_none_or(|(_, b)| u > b) {
                best = Some((p.threshold, u));
            }
        }
    }
    Ok(EvaluationReport {
        format: REPORT_FORMAT.into(),
        version: REPORT_VERSION,
        utility_params: *params,
        success_window_hours: success_window,
        counts,
        panels,
        best_threshold: best.map(|(t, _)| t),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn cohort(seed: u64) -> Vec<ScoredEncounter<f64>> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..40)
            .map(|i| {
                let n = rng.random_range(1..40);
                let onset = (rng.random::<f64>() < 0.3).then(|| rng.random_range(0..n));
                let labels: Vec<u8> = (0..n).map(|t| u8::from(onset.is_some_and(|o| t >= o))).collect();
                let probabilities = labels.iter().map(|&y| (0.3 * y as f64 + rng.random::<f64>() * 0.7).min(1.0)).collect();
                ScoredEncounter { encounter_id: i, labels, probabilities }
            })
            .collect()
    }

    #[test]
    fn default_grid_and_monotone_rates() {
        let c = cohort(1);
        let r = threshold_sweep(&c, &default_thresholds(), &UtilityParams::default(), 6).unwrap();
        assert_eq!(r.panels.len(), 9);
        for w in r.panels.windows(2) {
            assert!(w[1].flag_rate <= w[0].flag_rate);
            assert!(w[1].sensitivity.unwrap() <= w[0].sensitivity.unwrap());
            assert!(w[1].specificity.unwrap() >= w[0].specificity.unwrap());
        }
        // Direct recount of the flag rate.
        for p in &r.panels {
            let flagged = c.iter().filter(|e| e.probabilities.iter().any(|&x| x > p.threshold)).count();
            assert_eq!(p.flag_rate, flagged as f64 / c.len() as f64);
        }
        let best = r.best_panel().unwrap();
        assert!(r.panels.iter().all(|p| p.normalized_utility.unwrap() <= best.normalized_utility.unwrap()));
        assert_eq!(EvaluationReport::from_text(&r.to_text()).unwrap(), r);
    }

    #[test]
    fn constant_probability_is_a_step() {
        let mut c = cohort(2);
        for e in &mut c {
            e.probabilities.iter_mut().for_each(|p| *p = 0.5);
        }
        let r = threshold_sweep(&c, &default_thresholds(), &UtilityParams::default(), 6).unwrap();
        let strip = |p: &MetricsPanel| MetricsPanel { threshold: 0.0, ..p.clone() };
        for k in 1..4 {
            assert_eq!(strip(&r.panels[k]), strip(&r.panels[0]));
        }
        for k in 5..9 {
            assert_eq!(strip(&r.panels[k]), strip(&r.panels[4]));
        }
        assert_ne!(strip(&r.panels[3]), strip(&r.panels[4]));
    }

    #[test]
    fn threshold_and_input_errors() {
        let c = cohort(3);
        let p = UtilityParams::default();
        assert!(threshold_sweep(&c, &[], &p, 6).is_err());
        assert!(threshold_sweep(&c, &[0.5, 0.3], &p, 6).is_err());
        assert!(threshold_sweep(&c, &[0.0, 0.3], &p, 6).is_err());
        let mut bad = c.clone();
        bad[0].probabilities[0] = 1.5;
        assert!(matches!(threshold_sweep(&bad, &[0.5], &p, 6), Err(EvalError::Probability { .. })));
        assert!(matches!(threshold_sweep::<f64>(&[], &[0.5], &p, 6), Err(EvalError::Empty)));
    }

    #[test]
    fn non_septic_cohort_has_no_utility() {
        let c = vec![ScoredEncounter { encounter_id: 0, labels: vec![0; 4], probabilities: vec![0.2; 4] }];
        let r = threshold_sweep(&c, &[0.1, 0.5], &UtilityParams::default(), 6).unwrap();
        assert!(r.panels.iter().all(|p| p.normalized_utility.is_none()));
        assert_eq!(r.best_threshold, None);
    }
}

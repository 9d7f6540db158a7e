use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::model::{CohortFrame, EncounterId};
use crate::rng::sub_seed;
use crate::scalar::Scalar;
use crate::split::stratified_assign;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub train_encounters: Vec<EncounterId>,
    pub test_encounters: Vec<EncounterId>,
    pub train_prevalence: f64,
    pub test_prevalence: f64,
}

/// Encounter-level split that keeps the septic share equal on both sides
/// up to rounding. `fraction` goes to training.
pub fn stratified_split<T: Scalar>(
    cohort: &CohortFrame<T>,
    fraction: f64,
    seed: u64,
) -> Result<(CohortFrame<T>, CohortFrame<T>, SplitSummary), PipelineError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(PipelineError::Validation(format!("train fraction {fraction} must lie in (0, 1)")));
    }
    let septic: Vec<bool> = cohort.encounters().iter().map(|e| e.is_septic()).collect();
    let n_septic = septic.iter().filter(|&&s| s).count();
    let n_clean = septic.len() - n_septic;
    if n_septic < 2 || n_clean < 2 {
        return Err(PipelineError::stage(
            "split",
            format!("need at least 2 encounters per class, have {n_septic} septic and {n_clean} non-septic"),
        ));
    }
    let in_train = stratified_assign(&septic, fraction, sub_seed(seed, "split"), "split");
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (e, &t) in cohort.encounters().iter().zip(&in_train) {
        if t {
            train.push(e.clone());
        } else {
            test.push(e.clone());
        }
    }
    if train.is_empty() || test.is_empty() {
        return Err(PipelineError::stage("split", "one side of the split is empty"));
    }
    let prevalence = |v: &[crate::model::EncounterSeries<T>]| v.iter().filter(|e| e.is_septic()).count() as f64 / v.len() as f64;
    let summary = SplitSummary {
        train_encounters: train.iter().map(|e| e.encounter_id).collect(),
        test_encounters: test.iter().map(|e| e.encounter_id).collect(),
        train_prevalence: prevalence(&train),
        test_prevalence: prevalence(&test),
    };
    let before = cohort.counts();
    let mut tr = cohort.with_encounters(train);
    tr.record_since("stratified_split:train", before, format!("fraction {fraction}"));
    let mut te = cohort.with_encounters(test);
    te.record_since("stratified_split:test", before, format!("fraction {}", 1.0 - fraction));
    Ok((tr, te, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{epoch, tiny_schema, EncounterSeries};

    fn cohort(n: usize, septic: usize) -> CohortFrame<f64> {
        let s = tiny_schema();
        let enc = (0..n)
            .map(|i| {
                let mut e = EncounterSeries::empty(&s, i as u64 + 1, epoch(), 8);
                if i < septic {
                    e.labels_mut()[4..].iter_mut().for_each(|y| *y = 1);
                }
                e
            })
            .collect();
        CohortFrame::from_encounters(s, enc)
    }

    #[test]
    fn round_numbers_split_exactly() {
        let c = cohort(100, 10);
        let (tr, te, s) = stratified_split(&c, 0.8, 1).unwrap();
        assert_eq!((tr.n_encounters(), te.n_encounters()), (80, 20));
        assert_eq!(tr.encounters().iter().filter(|e| e.is_septic()).count(), 8);
        assert_eq!(te.encounters().iter().filter(|e| e.is_septic()).count(), 2);
        let (_, _, again) = stratified_split(&c, 0.8, 1).unwrap();
        assert_eq!(s, again);
        let mut ids: Vec<_> = s.train_encounters.iter().chain(&s.test_encounters).copied().collect();
        ids.sort_unstable();
        assert_eq!(ids, (1..=100).collect::<Vec<_>>());
    }

    #[test]
    fn too_few_per_class() {
        assert!(stratified_split(&cohort(10, 1), 0.8, 1).is_err());
        assert!(stratified_split(&cohort(10, 9), 0.8, 1).is_err());
        assert!(matches!(stratified_split(&cohort(10, 5), 1.0, 1), Err(PipelineError::Validation(_))));
    }
}

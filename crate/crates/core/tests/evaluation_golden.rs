//! Four-encounter report checked against hand arithmetic and against a
//! stored copy of its serialized form. Set `UPDATE_GOLDEN=1` to rewrite
//! the stored copy after an intentional format change.

use std::path::PathBuf;

use approx::assert_abs_diff_eq;
use sepsis_core::evaluation::{threshold_sweep, EvaluationReport, ScoredEncounter, UtilityParams};

fn cohort() -> Vec<ScoredEncounter<f64>> {
    let e1 = ScoredEncounter {
        encounter_id: 1,
        labels: (0..10).map(|t| u8::from(t >= 8)).collect(),
        probabilities: (0..10).map(|t| if t < 4 { 0.1 } else { 0.6 }).collect(),
    };
    let e2 = ScoredEncounter {
        encounter_id: 2,
        labels: vec![0, 0, 0, 0, 0, 1],
        probabilities: vec![0.4; 6],
    };
    let e3 = ScoredEncounter {
        encounter_id: 3,
        labels: vec![0; 5],
        probabilities: vec![0.2, 0.8, 0.2, 0.2, 0.2],
    };
    let e4 = ScoredEncounter {
        encounter_id: 4,
        labels: vec![0; 4],
        probabilities: vec![0.1; 4],
    };
    vec![e1, e2, e3, e4]
}

fn report() -> EvaluationReport {
    threshold_sweep(&cohort(), &[0.3, 0.5, 0.7], &UtilityParams::default(), 6).unwrap()
}

#[test]
fn panels_match_hand_arithmetic() {
    let r = report();
    assert_eq!(r.counts.encounters, 4);
    assert_eq!(r.counts.septic_encounters, 2);
    assert_eq!(r.counts.rows, 25);
    assert_eq!(r.counts.positive_rows, 3);

    // Cohort totals in ninths: inaction -98/9, optimal 90.5/9.
    let span = 188.5 / 9.0;
    let [p3, p5, p7] = [&r.panels[0], &r.panels[1], &r.panels[2]];
    assert_abs_diff_eq!(p3.normalized_utility.unwrap(), (156.0 / 9.0 - 0.05) / span, epsilon = 1e-12);
    assert_abs_diff_eq!(p5.normalized_utility.unwrap(), (81.0 / 9.0 - 0.05) / span, epsilon = 1e-12);
    assert_abs_diff_eq!(p7.normalized_utility.unwrap(), -0.05 / span, epsilon = 1e-12);
    assert_eq!(r.best_threshold, Some(0.3));

    assert_eq!((p3.flagged, p3.septic_success, p3.flagged_non_septic), (3, 2, 1));
    assert_eq!(p3.sensitivity, Some(1.0));
    assert_eq!(p3.specificity, Some(0.5));
    assert_abs_diff_eq!(p3.ppv.unwrap(), 2.0 / 3.0, epsilon = 1e-12);
    assert_abs_diff_eq!(p3.f1.unwrap(), 0.8, epsilon = 1e-12);
    assert_eq!(p3.flag_rate, 0.75);
    assert_eq!(p3.median_timeliness, Some(4));
    assert_eq!(p3.npv, Some(1.0));

    assert_eq!(p5.sensitivity, Some(0.5));
    assert_eq!(p5.f1, Some(0.5));
    assert_eq!(p5.flag_rate, 0.5);
    assert_eq!(p5.median_timeliness, Some(4));

    assert_eq!(p7.sensitivity, Some(0.0));
    assert_eq!(p7.f1, Some(0.0));
    assert_eq!(p7.ppv, Some(0.0));
    assert_eq!(p7.false_flag_fraction, Some(1.0));
    assert_eq!(p7.median_timeliness, None);
}

#[test]
fn serialized_report_is_stable() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/evaluation_golden.json");
    let text = report().to_text();
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, &text).unwrap();
    }
    let golden = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text, golden);
    assert_eq!(EvaluationReport::from_text(&golden).unwrap(), report());
}

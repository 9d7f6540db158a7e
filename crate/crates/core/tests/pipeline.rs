use std::fs;
use std::path::Path;

use sepsis_core::pipeline::{
    run_pipeline, stage_clean, stage_evaluate, stage_explain, stage_features, stage_ingest, stage_predict,
    stage_synth, stage_train, PipelineError, ProspectiveConfig, RunConfig, ARTIFACTS, FAILED_MARKER, MANIFEST,
};

fn small(out: &Path) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.seed = 3;
    cfg.paths.output = out.to_path_buf();
    cfg.synth.n_encounters = 300;
    cfg.features.selection.params.rounds = 20;
    for p in [&mut cfg.train.full, &mut cfg.train.nonstat] {
        p.rounds = 20;
        p.initial_learning_rate = 0.2;
    }
    cfg.eval.explain_max_rows = 200;
    cfg
}

#[test]
fn staged_chain_reproduces_the_single_process_run() {
    let root = tempfile::tempdir().unwrap();
    let (a, b) = (root.path().join("run"), root.path().join("staged"));
    run_pipeline(&small(&a)).unwrap();
    let cfg = small(&b);
    for stage in [
        stage_synth,
        stage_ingest,
        stage_clean,
        stage_features,
        stage_train,
        stage_predict,
        stage_evaluate,
        stage_explain,
    ] {
        assert!(!stage(&cfg).unwrap().is_empty());
    }
    for name in [
        "ground_truth.csv",
        "cleaning_audit.json",
        "feature_state.json",
        "selection_report.json",
        "model_full.gbdt",
        "model_nonstat.gbdt",
        "predictions_test.csv",
        "evaluation_test.json",
        "explanation.json",
    ] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn run_writes_every_artifact_and_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cfg.eval.prospective = Some(ProspectiveConfig {
        n_encounters: 100,
        ..Default::default()
    });
    fs::write(dir.path().join(FAILED_MARKER), "stale").unwrap();
    let s = run_pipeline(&cfg).unwrap();
    assert!(!dir.path().join(FAILED_MARKER).exists());
    let manifest = fs::read_to_string(dir.path().join(MANIFEST)).unwrap();
    for a in ARTIFACTS.iter().chain(&["evaluation_prospective.json", "predictions_prospective.csv"]) {
        assert!(dir.path().join(a).is_file(), "{a}");
        assert!(manifest.lines().any(|l| l.starts_with(&format!("{a}\t"))), "{a} not in manifest");
    }
    let p = s.prospective.unwrap();
    assert!(p.nonstat_rows > 0 && p.one_hour_encounters > 0);
    assert!(s.leakage_frozen);
    assert_eq!(s.test.encounters, s.test_encounters);
}

#[test]
fn validation_errors_happen_before_any_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let mut cfg = small(&out);
    cfg.schema.path = Some(dir.path().join("missing_schema.toml"));
    let e = run_pipeline(&cfg).unwrap_err();
    assert!(matches!(e, PipelineError::Validation(_)), "{e}");
    assert_eq!(e.exit_code(), 2);
    assert!(!out.exists());
}

#[test]
fn stage_failure_leaves_a_marker() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cfg.synth.n_encounters = 6;
    cfg.synth.prevalence = 0.01;
    let e = run_pipeline(&cfg).unwrap_err();
    assert_eq!(e.exit_code(), 1);
    let marker = fs::read_to_string(dir.path().join(FAILED_MARKER)).unwrap();
    assert!(marker.starts_with(&format!("stage: {}\n", e.stage_name())), "{marker}");
    assert!(!dir.path().join(MANIFEST).exists());
}

#[test]
fn stages_out_of_order_are_validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    for stage in [stage_ingest, stage_clean, stage_features, stage_train, stage_predict, stage_evaluate] {
        assert_eq!(stage(&cfg).unwrap_err().exit_code(), 2);
    }
}

#[test]
fn non_monotone_labels_are_rejected_on_ingest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    stage_synth(&cfg).unwrap();
    let text = fs::read_to_string(dir.path().join("cohort.csv")).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let header: Vec<&str> = lines[0].split(',').collect();
    let col = header.iter().position(|h| *h == "sepsis_label").unwrap();
    // Mark one mid-stay hour septic while the following hour stays negative.
    let row = (2..lines.len() - 1)
        .find(|&i| {
            let cur: Vec<&str> = lines[i].split(',').collect();
            let next: Vec<&str> = lines[i + 1].split(',').collect();
            cur[0] == next[0] && cur[col] == "0" && next[col] == "0"
        })
        .unwrap();
    let mut cells: Vec<String> = lines[row].split(',').map(str::to_string).collect();
    cells[col] = "1".into();
    lines[row] = cells.join(",");
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, lines.join("\n") + "\n").unwrap();
    let mut cfg = cfg;
    cfg.paths.input = Some(bad);
    let e = stage_ingest(&cfg).unwrap_err();
    assert_eq!(e.exit_code(), 2, "{e}");
}

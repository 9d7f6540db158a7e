use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use super::explain::explain_report;
use super::io::{read_matrix_csv, read_predictions_csv, write_matrix_csv, write_predictions_csv, PredictionRow};
use super::routing::{route_and_predict, RoutedPredictions};
use super::split::stratified_split;
use super::stages::{apply_features, fit_features, fit_pruning, train_models, FeatureState, FittedFeatures, TrainedModels};
use super::PipelineError;
use crate::cleaning::apply_cohort_filters;
use crate::evaluation::{threshold_sweep, EvaluationReport, ScoredEncounter};
use crate::gbdt::quantile_bin;
use crate::ingest::{read_wide_csv, write_wide_csv};
use crate::model::{validate_cohort, ViolationKind};
use crate::rng::sub_seed;
use crate::synth::{generate_cohort, write_ground_truth, SynthConfig};
use crate::{Cohort, Matrix, Model, Schema};

pub const MANIFEST: &str = "manifest.txt";
pub const FAILED_MARKER: &str = "FAILED";

/// Files a successful `run` always writes, besides the manifest.
pub const ARTIFACTS: &[&str] = &[
    "config_echo.toml",
    "cleaning_audit.json",
    "split.json",
    "prune_report.json",
    "selection_report.json",
    "bookkeeping.json",
    "feature_state.json",
    "model_full.gbdt",
    "model_nonstat.gbdt",
    "loss_full.json",
    "loss_nonstat.json",
    "predictions_test.csv",
    "evaluation_test.json",
    "explanation.json",
    "leakage_check.json",
    "run_summary.json",
];

const COHORT_CSV: &str = "cohort.csv";
const GROUND_TRUTH: &str = "ground_truth.csv";
const INGESTED_CSV: &str = "ingested.csv";
const CLEANED_CSV: &str = "cleaned.csv";
const TRAIN_MATRIX: &str = "train_matrix.csv";
const TEST_MATRIX: &str = "test_matrix.csv";

/// Output directory plus the list of files written so far.
struct Out {
    dir: PathBuf,
    written: Vec<String>,
}

impl Out {
    fn new(dir: &Path) -> Result<Self, PipelineError> {
        fs::create_dir_all(dir).map_err(|e| PipelineError::stage("io", format!("{}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn create(&mut self, stage: &str, name: &str) -> Result<BufWriter<File>, PipelineError> {
        let p = self.path(name);
        let f = File::create(&p).map_err(|e| PipelineError::stage(stage, format!("{}: {e}", p.display())))?;
        self.written.push(name.to_string());
        Ok(BufWriter::new(f))
    }

    fn text(&mut self, stage: &str, name: &str, text: &str) -> Result<(), PipelineError> {
        let p = self.path(name);
        fs::write(&p, text).map_err(|e| PipelineError::stage(stage, format!("{}: {e}", p.display())))?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn json<S: Serialize>(&mut self, stage: &str, name: &str, value: &S) -> Result<(), PipelineError> {
        let mut s = serde_json::to_string_pretty(value).map_err(|e| PipelineError::stage(stage, e))?;
        s.push('\n');
        self.text(stage, name, &s)
    }

    fn bytes(&mut self, stage: &str, name: &str, bytes: &[u8]) -> Result<(), PipelineError> {
        let p = self.path(name);
        fs::write(&p, bytes).map_err(|e| PipelineError::stage(stage, format!("{}: {e}", p.display())))?;
        self.written.push(name.to_string());
        Ok(())
    }
}

fn open_upstream(path: &Path, hint: &str) -> Result<BufReader<File>, PipelineError> {
    File::open(path).map(BufReader::new).map_err(|e| {
        PipelineError::Validation(format!("{}: {e} (run `{hint}` first)", path.display()))
    })
}

fn read_json<D: DeserializeOwned>(path: &Path, hint: &str) -> Result<D, PipelineError> {
    serde_json::from_reader(open_upstream(path, hint)?)
        .map_err(|e| PipelineError::Validation(format!("{}: {e}", path.display())))
}

fn load_model(path: &Path) -> Result<Model, PipelineError> {
    if !path.is_file() {
        return Err(PipelineError::Validation(format!("{} does not exist (run `train` first)", path.display())));
    }
    Model::load(path).map_err(|e| PipelineError::Validation(format!("{}: {e}", path.display())))
}

fn synth_config(cfg: &RunConfig) -> SynthConfig {
    SynthConfig {
        seed: sub_seed(cfg.seed, "synth"),
        ..cfg.synth.clone()
    }
}

/// Reads a wide CSV and rejects structurally invalid cohorts.
fn ingest_file(path: &Path, schema: &Schema) -> Result<(Cohort, IngestReport), PipelineError> {
    let cohort = read_wide_csv(open_upstream(path, "synth")?, schema)
        .map_err(|e| PipelineError::Validation(format!("{}: {e}", path.display())))?;
    check_cohort(cohort)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub encounters: usize,
    pub rows: usize,
    pub out_of_range_values: usize,
}

fn check_cohort(cohort: Cohort) -> Result<(Cohort, IngestReport), PipelineError> {
    let violations = validate_cohort(&cohort);
    if let Some(v) = violations.iter().find(|v| v.kind != ViolationKind::OutOfPhysiologicRange) {
        return Err(PipelineError::Validation(format!("invalid cohort: {v}")));
    }
    let (encounters, rows) = cohort.counts();
    Ok((
        cohort,
        IngestReport {
            encounters,
            rows,
            out_of_range_values: violations.len(),
        },
    ))
}

fn source_cohort(cfg: &RunConfig, schema: &Schema, out: &mut Out) -> Result<Cohort, PipelineError> {
    match &cfg.paths.input {
        Some(p) => Ok(ingest_file(p, schema)?.0),
        None => {
            let (cohort, truth) = generate_cohort(schema, &synth_config(cfg)).map_err(|e| PipelineError::stage("synth", e))?;
            write_ground_truth(&truth, out.create("synth", GROUND_TRUTH)?).map_err(|e| PipelineError::stage("synth", e))?;
            Ok(cohort)
        }
    }
}

fn clean(cohort: &Cohort, cfg: &RunConfig, out: &mut Out) -> Result<Cohort, PipelineError> {
    let (cleaned, audit) = apply_cohort_filters(cohort, &cfg.cleaning).map_err(|e| PipelineError::stage("clean", e))?;
    #[derive(Serialize)]
    struct CleanReport<'a> {
        audit: &'a crate::cleaning::CleaningAudit,
        encounters_before: usize,
        rows_before: usize,
        encounters_after: usize,
        rows_after: usize,
    }
    let (eb, rb) = cohort.counts();
    let (ea, ra) = cleaned.counts();
    out.json(
        "clean",
        "cleaning_audit.json",
        &CleanReport {
            audit: &audit,
            encounters_before: eb,
            rows_before: rb,
            encounters_after: ea,
            rows_after: ra,
        },
    )?;
    Ok(cleaned)
}

#[derive(Serialize)]
struct PruneReport<'a> {
    cutoff: f64,
    representatives: &'a [String],
    clusters: &'a [Vec<String>],
    missing_fractions: &'a [(String, f64)],
    linkage: &'a [crate::preprocess::LinkageStep<f64>],
}

fn write_feature_reports(f: &FittedFeatures, out: &mut Out) -> Result<(), PipelineError> {
    out.json(
        "features",
        "prune_report.json",
        &PruneReport {
            cutoff: f.prune.cutoff,
            representatives: &f.prune.representatives,
            clusters: &f.prune.clusters,
            missing_fractions: &f.missing_fractions,
            linkage: &f.prune.linkage,
        },
    )?;
    out.json("features", "selection_report.json", &f.selection)?;
    out.json("features", "bookkeeping.json", &f.bookkeeping)?;
    out.json("features", "feature_state.json", &f.state)
}

fn write_models(m: &TrainedModels, out: &mut Out) -> Result<(), PipelineError> {
    let err = |e: crate::gbdt::GbdtError| PipelineError::stage("train", e);
    out.bytes("train", "model_full.gbdt", &m.full.to_bytes().map_err(err)?)?;
    out.bytes("train", "model_nonstat.gbdt", &m.nonstat.to_bytes().map_err(err)?)?;
    out.json("train", "loss_full.json", &m.full_trace)?;
    out.json("train", "loss_nonstat.json", &m.nonstat_trace)
}

fn prediction_rows(matrix: &Matrix, routed: &RoutedPredictions<f64>) -> Vec<PredictionRow> {
    let mut rows = Vec::with_capacity(matrix.n_rows());
    for ((id, r), (_, route)) in matrix.encounter_ranges().into_iter().zip(&routed.routes) {
        for i in r {
            rows.push(PredictionRow {
                encounter_id: id,
                hour: matrix.hours[i],
                label: matrix.labels[i],
                probability: routed.probabilities[i],
                route: *route,
            });
        }
    }
    rows
}

fn scored_from_rows(rows: &[PredictionRow]) -> Vec<ScoredEncounter<f64>> {
    let mut out: Vec<ScoredEncounter<f64>> = Vec::new();
    for r in rows {
        match out.last_mut() {
            Some(e) if e.encounter_id == r.encounter_id => {
                e.labels.push(r.label);
                e.probabilities.push(r.probability);
            }
            _ => out.push(ScoredEncounter {
                encounter_id: r.encounter_id,
                labels: vec![r.label],
                probabilities: vec![r.probability],
            }),
        }
    }
    out
}

fn evaluate(scored: &[ScoredEncounter<f64>], cfg: &RunConfig) -> Result<EvaluationReport, PipelineError> {
    threshold_sweep(scored, &cfg.eval.thresholds, &cfg.eval.utility, cfg.eval.success_window_hours)
        .map_err(|e| PipelineError::stage("evaluate", e))
}

/// Evenly strided rows, at most `cap`.
fn explain_rows(n: usize, cap: usize) -> Vec<usize> {
    let step = n.div_ceil(cap.max(1)).max(1);
    (0..n).step_by(step).collect()
}

fn explain(model: &Model, matrix: &Matrix, cfg: &RunConfig, out: &mut Out) -> Result<super::ExplainReport, PipelineError> {
    let rows = explain_rows(matrix.n_rows(), cfg.eval.explain_max_rows);
    let frame = matrix
        .frame
        .take_rows(&rows)
        .select(&model.feature_names)
        .map_err(|e| PipelineError::stage("explain", e))?;
    let report = explain_report(model, &frame, cfg.eval.explain_top_k)?;
    for w in &report.warnings {
        log::warn!("explain: {w}");
    }
    out.json("explain", "explanation.json", &report)?;
    Ok(report)
}

/// Evidence that fitted artifacts come from the training split: recomputing
/// them on training data reproduces them, recomputing on the test split
/// does not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageCheck {
    pub bin_edges_match_training_recompute: bool,
    pub bin_edge_features_compared: usize,
    pub bin_edge_features_differing_on_test: usize,
    pub first_differing_bin_feature: Option<String>,
    pub pruning_matches_training_recompute: bool,
    pub pruning_differs_on_test: bool,
    pub max_missing_fraction_gap: f64,
    pub frozen: bool,
}

pub fn leakage_check(
    train: &Cohort,
    test: &Cohort,
    fitted: &FittedFeatures,
    model: &Model,
    test_matrix: &Matrix,
    cutoff: f64,
) -> Result<LeakageCheck, PipelineError> {
    let edges = |m: &Matrix| -> Result<Vec<Vec<f64>>, PipelineError> {
        let frame = m.frame.select(&model.feature_names).map_err(|e| PipelineError::stage("leakage", e))?;
        Ok(quantile_bin(&frame, model.params.max_bins)
            .map_err(|e| PipelineError::stage("leakage", e))?
            .mapper
            .edges)
    };
    let train_edges = edges(&fitted.train_matrix)?;
    let test_edges = edges(test_matrix)?;
    let differing: Vec<usize> = (0..model.n_features()).filter(|&f| test_edges[f] != model.bin_edges[f]).collect();
    let (train_prune, _) = fit_pruning(train, cutoff)?;
    let (test_prune, test_missing) = fit_pruning(test, cutoff)?;
    let pruning_matches = train_prune.representatives == fitted.prune.representatives
        && train_prune.clusters == fitted.prune.clusters;
    let pruning_differs = test_prune.representatives != fitted.prune.representatives
        || test_prune.clusters != fitted.prune.clusters;
    let max_gap = fitted
        .missing_fractions
        .iter()
        .zip(&test_missing)
        .map(|((_, a), b)| (a - b).abs())
        .fold(0.0, f64::max);
    let edges_match = train_edges == model.bin_edges;
    Ok(LeakageCheck {
        bin_edges_match_training_recompute: edges_match,
        bin_edge_features_compared: model.n_features(),
        bin_edge_features_differing_on_test: differing.len(),
        first_differing_bin_feature: differing.first().map(|&f| model.feature_names[f].clone()),
        pruning_matches_training_recompute: pruning_matches,
        pruning_differs_on_test: pruning_differs,
        max_missing_fraction_gap: max_gap,
        frozen: edges_match && pruning_matches && (!differing.is_empty() || pruning_differs),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub encounters: usize,
    pub septic_encounters: usize,
    pub one_hour_encounters: usize,
    pub full_rows: usize,
    pub nonstat_rows: usize,
    pub best_threshold: Option<f64>,
    pub normalized_utility: Option<f64>,
    pub f1: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub flag_rate: Option<f64>,
}

fn eval_summary(report: &EvaluationReport, routed: &RoutedPredictions<f64>, matrix: &Matrix) -> EvalSummary {
    let best = report.best_panel();
    EvalSummary {
        encounters: report.counts.encounters,
        septic_encounters: report.counts.septic_encounters,
        one_hour_encounters: matrix.encounter_ranges().iter().filter(|(_, r)| r.len() == 1).count(),
        full_rows: routed.full_rows,
        nonstat_rows: routed.nonstat_rows,
        best_threshold: report.best_threshold,
        normalized_utility: best.and_then(|p| p.normalized_utility),
        f1: best.and_then(|p| p.f1),
        sensitivity: best.and_then(|p| p.sensitivity),
        specificity: best.and_then(|p| p.specificity),
        flag_rate: best.map(|p| p.flag_rate),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub encounters_input: usize,
    pub encounters_cleaned: usize,
    pub train_encounters: usize,
    pub test_encounters: usize,
    pub train_prevalence: f64,
    pub test_prevalence: f64,
    pub bookkeeping_identity: String,
    pub selected_statistics: Vec<String>,
    pub full_model_trees: usize,
    pub nonstat_model_trees: usize,
    pub test: EvalSummary,
    pub prospective: Option<EvalSummary>,
    pub top_features: Vec<String>,
    pub leakage_frozen: bool,
}

fn predict_and_evaluate(
    matrix: &Matrix,
    models: &TrainedModels,
    cfg: &RunConfig,
    out: &mut Out,
    tag: &str,
) -> Result<EvalSummary, PipelineError> {
    let routed = route_and_predict(matrix, &models.full, Some(&models.nonstat), &cfg.routing)?;
    write_predictions_csv(&prediction_rows(matrix, &routed), out.create("predict", &format!("predictions_{tag}.csv"))?)?;
    let report = evaluate(&routed.scored(matrix), cfg)?;
    out.text("evaluate", &format!("evaluation_{tag}.json"), &report.to_text())?;
    Ok(eval_summary(&report, &routed, matrix))
}

fn prospective(cfg: &RunConfig, schema: &Schema, state: &FeatureState, models: &TrainedModels, out: &mut Out) -> Result<Option<EvalSummary>, PipelineError> {
    let Some(p) = &cfg.eval.prospective else { return Ok(None) };
    let synth = SynthConfig {
        n_encounters: p.n_encounters,
        one_hour_fraction: p.one_hour_fraction,
        seed: sub_seed(cfg.seed, "synth:prospective"),
        ..cfg.synth.clone()
    };
    let (cohort, truth) = generate_cohort(schema, &synth).map_err(|e| PipelineError::stage("prospective", e))?;
    write_ground_truth(&truth, out.create("prospective", "ground_truth_prospective.csv")?)
        .map_err(|e| PipelineError::stage("prospective", e))?;
    let rules = crate::cleaning::CleaningRules {
        min_stay_hours: p.min_stay_hours,
        ..cfg.cleaning.clone()
    };
    let (cleaned, _) = apply_cohort_filters(&cohort, &rules).map_err(|e| PipelineError::stage("prospective", e))?;
    let matrix = apply_features(&cleaned, state)?;
    predict_and_evaluate(&matrix, models, cfg, out, "prospective").map(Some)
}

fn timed<R>(stage: &str, f: impl FnOnce() -> Result<R, PipelineError>) -> Result<R, PipelineError> {
    let t = Instant::now();
    let r = f();
    log::info!("{stage}: {:.2}s", t.elapsed().as_secs_f64());
    r
}

fn echo(cfg: &RunConfig) -> String {
    // The output directory is left out so runs into different directories
    // produce comparable manifests.
    let mut c = cfg.clone();
    c.paths.output = PathBuf::from(".");
    c.to_toml_string()
}

fn run_inner(cfg: &RunConfig, out: &mut Out) -> Result<RunSummary, PipelineError> {
    let schema = cfg.load_schema()?;
    out.text("config", "config_echo.toml", &echo(cfg))?;
    let cohort = timed("ingest", || source_cohort(cfg, &schema, out))?;
    let cleaned = timed("clean", || clean(&cohort, cfg, out))?;
    let (train, test, split) = stratified_split(&cleaned, cfg.train.train_fraction, cfg.seed)?;
    out.json("split", "split.json", &split)?;
    let fitted = timed("features", || fit_features(&train, &cfg.features, cfg.seed))?;
    write_feature_reports(&fitted, out)?;
    let test_matrix = timed("features:test", || apply_features(&test, &fitted.state))?;
    let models = timed("train", || train_models(&fitted.train_matrix, &cfg.train, cfg.seed))?;
    write_models(&models, out)?;
    let test_summary = timed("evaluate", || predict_and_evaluate(&test_matrix, &models, cfg, out, "test"))?;
    let prospective = timed("prospective", || prospective(cfg, &schema, &fitted.state, &models, out))?;
    let explanation = timed("explain", || explain(&models.full, &test_matrix, cfg, out))?;
    let leakage = timed("leakage", || {
        leakage_check(&train, &test, &fitted, &models.full, &test_matrix, cfg.features.ward_cutoff)
    })?;
    out.json("leakage", "leakage_check.json", &leakage)?;
    let summary = RunSummary {
        seed: cfg.seed,
        encounters_input: cohort.n_encounters(),
        encounters_cleaned: cleaned.n_encounters(),
        train_encounters: train.n_encounters(),
        test_encounters: test.n_encounters(),
        train_prevalence: split.train_prevalence,
        test_prevalence: split.test_prevalence,
        bookkeeping_identity: fitted.bookkeeping.identity.clone(),
        selected_statistics: fitted.state.selected.clone(),
        full_model_trees: models.full.trees.len(),
        nonstat_model_trees: models.nonstat.trees.len(),
        test: test_summary,
        prospective,
        top_features: explanation.top.iter().map(|s| s.name.clone()).collect(),
        leakage_frozen: leakage.frozen,
    };
    out.json("summary", "run_summary.json", &summary)?;
    Ok(summary)
}

/// One line per artifact: `path<TAB>bytes<TAB>sha256:<hex>`, sorted by
/// path, after a header carrying the seed and the config checksum.
pub fn write_manifest(dir: &Path, seed: u64, files: &[String]) -> Result<PathBuf, PipelineError> {
    let err = |e: std::io::Error| PipelineError::stage("manifest", e);
    let mut files = files.to_vec();
    files.sort();
    files.dedup();
    let mut text = format!("# sepsis pipeline manifest\n# seed = {seed}\n");
    for f in &files {
        let bytes = fs::read(dir.join(f)).map_err(err)?;
        let digest = hex::encode(Sha256::digest(&bytes));
        text.push_str(&format!("{f}\t{}\tsha256:{digest}\n", bytes.len()));
    }
    let p = dir.join(MANIFEST);
    fs::write(&p, text).map_err(err)?;
    Ok(p)
}

fn with_failure_marker<R>(out: &Path, r: Result<R, PipelineError>) -> Result<R, PipelineError> {
    if let Err(e) = &r {
        if out.is_dir() {
            let _ = fs::write(out.join(FAILED_MARKER), format!("stage: {}\ncause: {e}\n", e.stage_name()));
        }
    }
    r
}

/// Runs every stage in memory and writes all reports, both models and the
/// manifest. On a stage failure the partial outputs stay in place next to
/// a `FAILED` marker naming the stage.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunSummary, PipelineError> {
    cfg.validate()?;
    let mut out = Out::new(&cfg.paths.output)?;
    for stale in [FAILED_MARKER, MANIFEST] {
        let _ = fs::remove_file(out.path(stale));
    }
    let r = run_inner(cfg, &mut out).and_then(|s| {
        write_manifest(&out.dir, cfg.seed, &out.written)?;
        Ok(s)
    });
    with_failure_marker(&out.dir, r)
}

fn stage<R>(cfg: &RunConfig, f: impl FnOnce(&mut Out) -> Result<R, PipelineError>) -> Result<Vec<PathBuf>, PipelineError> {
    cfg.validate()?;
    let mut out = Out::new(&cfg.paths.output)?;
    let r = f(&mut out).map(|_| out.written.iter().map(|w| out.dir.join(w)).collect());
    with_failure_marker(&out.dir, r)
}

/// Writes a synthetic cohort CSV and its ground-truth sidecar.
pub fn stage_synth(cfg: &RunConfig) -> Result<Vec<PathBuf>, PipelineError> {
    stage(cfg, |out| {
        let schema = cfg.load_schema()?;
        let (cohort, truth) = generate_cohort(&schema, &synth_config(cfg)).map_err(|e| PipelineError::stage("synth", e))?;
        write_wide_csv(&cohort, out.create("synth", COHORT_CSV)?).map_err(|e| PipelineError::stage("synth", e))?;
        write_ground_truth(&truth, out.create("synth", GROUND_TRUTH)?).map_err(|e| PipelineError::stage("synth", e))
    })
}

/// Reads `paths.input` (or a previously synthesized cohort), validates it
/// and writes it back on the dense hourly grid.
pub fn stage_ingest(cfg: &RunConfig) -> Result<Vec<PathBuf>, PipelineError> {
    stage(cfg, |out| {
        let schema = cfg.load_schema()?;
        let input = cfg.paths.input.clone().unwrap_or_else(|| out.path(COHORT_CSV));
        let (cohort, report) = ingest_file(&input, &schema)?;
        write_wide_csv(&cohort, out.create("ingest", INGESTED_CSV)?).map_err(|e| PipelineError::stage("ingest", e))?;
        out.json("ingest", "ingest_report.json", &report)
    })
}

pub fn stage_clean(cfg: &RunConfig) -> Result<Vec<PathBuf>, PipelineError> {
    stage(cfg, |out| {
        let schema = cfg.load_schema()?;
        let (cohort, _) = ingest_file(&out.path(INGESTED_CSV), &schema)?;
        let cleaned = clean(&cohort, cfg, out)?;
        write_wide_csv(&cleaned, out.create("clean", CLEANED_CSV)?).map_err(|e| PipelineError::stage("clean", e))
    })
}

/// Split, pruning, masks, imputation and selection; writes both matrices
/// and the frozen feature state.
pub fn stage_features(cfg: &RunConfig) -> Result<Vec<PathBuf>, PipelineError> {
    stage(cfg, |out| {
        let schema = cfg.load_schema()?;
        let (cleaned, _) = ingest_file(&out.path(CLEANED_CSV), &schema)?;
        let (train, test, split) = stratified_split(&cleaned, cfg.train.train_fraction, cfg.seed)?;
        out.json("split", "split.json", &split)?;
        let fitted = fit_features(&train, &cfg.features, cfg.seed)?;
        write_feature_reports(&fitted, out)?;
        let test_matrix = apply_features(&test, &fitted.state)?;
        write_matrix_csv(&fitted.train_matrix, out.create("features", TRAIN_MATRIX)?)?;
        write_matrix_csv(&test_matrix, out.create("features", TEST_MATRIX)?)
    })
}

fn load_matrix(out: &Out, name: &str) -> Result<(FeatureState, Matrix), PipelineError> {
    let state: FeatureState = read_json(&out.path("feature_state.json"), "features")?;
    let m = read_matrix_csv(open_upstream(&out.path(name), "features")?, &state.blocks)?;
    Ok((state, m))
}

pub fn stage_train(cfg: &RunConfig) -> Result<Vec<PathBuf>, PipelineError> {
    stage(cfg, |out| {
        let (_, matrix) = load_matrix(out, TRAIN_MATRIX)?;
        let models = train_models(&matrix, &cfg.train, cfg.seed)?;
        write_models(&models, out)
    })
}

pub fn stage_predict(cfg: &RunConfig) -> Result<Vec<PathBuf>, PipelineError> {
    stage(cfg, |out| {
        let (_, matrix) = load_matrix(out, TEST_MATRIX)?;
        let full = load_model(&out.path("model_full.gbdt"))?;
        let nonstat = load_model(&out.path("model_nonstat.gbdt"))?;
        let routed = route_and_predict(&matrix, &full, Some(&nonstat), &cfg.routing)?;
        write_predictions_csv(&prediction_rows(&matrix, &routed), out.create("predict", "predictions_test.csv")?)
    })
}

pub fn stage_evaluate(cfg: &RunConfig) -> Result<Vec<PathBuf>, PipelineError> {
    stage(cfg, |out| {
        let rows = read_predictions_csv(open_upstream(&out.path("predictions_test.csv"), "predict")?)?;
        let report = evaluate(&scored_from_rows(&rows), cfg)?;
        out.text("evaluate", "evaluation_test.json", &report.to_text())
    })
}

pub fn stage_explain(cfg: &RunConfig) -> Result<Vec<PathBuf>, PipelineError> {
    stage(cfg, |out| {
        let (_, matrix) = load_matrix(out, TEST_MATRIX)?;
        let full = load_model(&out.path("model_full.gbdt"))?;
        explain(&full, &matrix, cfg, out).map(|_| ())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strided_rows_respect_cap() {
        assert_eq!(explain_rows(10, 100), (0..10).collect::<Vec<_>>());
        let r = explain_rows(1001, 100);
        assert!(r.len() <= 100 && r.len() >= 90);
        assert!(explain_rows(0, 5).is_empty());
    }

    #[test]
    fn rows_regroup_by_encounter() {
        let rows: Vec<PredictionRow> = [(1, 0), (1, 1), (2, 0)]
            .iter()
            .map(|&(id, h)| PredictionRow {
                encounter_id: id,
                hour: h,
                label: 0,
                probability: 0.1,
                route: super::super::Route::Full,
            })
            .collect();
        let s = scored_from_rows(&rows);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].labels.len(), 2);
    }
}

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::cleaning::CleaningRules;
use crate::evaluation::{default_thresholds, UtilityParams, DEFAULT_SUCCESS_WINDOW};
use crate::features::{SelectionConfig, WindowSpec, DEFAULT_HORIZON};
use crate::gbdt::TrainParams;
use crate::preprocess::ImputePolicy;
use crate::schema::FeatureSchema;
use crate::synth::SynthConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Wide CSV cohort. Absent means the cohort is generated from `[synth]`.
    pub input: Option<PathBuf>,
    pub output: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            input: None,
            output: PathBuf::from("run"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemaConfig {
    /// Schema TOML. Absent means the bundled default schema.
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesConfig {
    pub ward_cutoff: f64,
    pub impute: ImputePolicy,
    pub window: WindowSpec,
    /// Hours by which training labels are moved ahead of onset.
    pub horizon: i64,
    pub selection: SelectionConfig,
}

impl Default for FeaturesConfig {
    fn default() -> Self {
        Self {
            ward_cutoff: 1.0,
            impute: ImputePolicy::default(),
            window: WindowSpec::default(),
            horizon: DEFAULT_HORIZON,
            selection: SelectionConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Share of encounters in the training split.
    pub train_fraction: f64,
    pub full: TrainParams,
    pub nonstat: TrainParams,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            full: TrainParams::default(),
            nonstat: TrainParams::default(),
        }
    }
}

/// Second synthetic cohort standing in for prospective data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProspectiveConfig {
    pub n_encounters: usize,
    pub one_hour_fraction: f64,
    pub min_stay_hours: usize,
}

impl Default for ProspectiveConfig {
    fn default() -> Self {
        Self {
            n_encounters: 500,
            one_hour_fraction: 0.4,
            min_stay_hours: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub thresholds: Vec<f64>,
    pub success_window_hours: usize,
    pub utility: UtilityParams,
    pub explain_top_k: usize,
    /// Cap on test rows attributed for the explanation report.
    pub explain_max_rows: usize,
    pub prospective: Option<ProspectiveConfig>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            thresholds: default_thresholds(),
            success_window_hours: DEFAULT_SUCCESS_WINDOW,
            utility: UtilityParams::default(),
            explain_top_k: 20,
            explain_max_rows: 2000,
            prospective: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoutingPolicy {
    /// Encounters with fewer rows go to the model without statistical
    /// features.
    pub min_hours_for_stats: usize,
}

impl Default for RoutingPolicy {
    fn default() -> Self {
        Self { min_hours_for_stats: 2 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: PathsConfig,
    pub schema: SchemaConfig,
    pub cleaning: CleaningRules,
    pub features: FeaturesConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub routing: RoutingPolicy,
    pub synth: SynthConfig,
}

fn invalid(msg: impl Into<String>) -> PipelineError {
    PipelineError::Validation(msg.into())
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| invalid(format!("config: {e}")))
    }

    /// Reads a config file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = cfg.paths.input.as_mut() {
            rebase(p);
        }
        rebase(&mut cfg.paths.output);
        if let Some(p) = cfg.schema.path.as_mut() {
            rebase(p);
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks parameter ranges and that referenced files exist.
    pub fn validate(&self) -> Result<(), PipelineError> {
        if let Some(p) = &self.schema.path {
            if !p.is_file() {
                return Err(invalid(format!("schema file {} does not exist", p.display())));
            }
        }
        if let Some(p) = &self.paths.input {
            if !p.is_file() {
                return Err(invalid(format!("input file {} does not exist", p.display())));
            }
        }
        let f = self.train.train_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(invalid(format!("train_fraction {f} must lie in (0, 1)")));
        }
        if self.routing.min_hours_for_stats < 1 {
            return Err(invalid("routing.min_hours_for_stats must be at least 1"));
        }
        if !(self.features.ward_cutoff > 0.0) {
            return Err(invalid("features.ward_cutoff must be positive"));
        }
        if self.features.horizon < 0 {
            return Err(invalid("features.horizon must be non-negative"));
        }
        if self.eval.explain_top_k < 1 {
            return Err(invalid("eval.explain_top_k must be at least 1"));
        }
        self.cleaning.validate().map_err(|e| invalid(e.to_string()))?;
        self.features.window.validate().map_err(|e| invalid(e.to_string()))?;
        self.train.full.validate().map_err(|e| invalid(format!("train.full: {e}")))?;
        self.train.nonstat.validate().map_err(|e| invalid(format!("train.nonstat: {e}")))?;
        self.features
            .selection
            .params
            .validate()
            .map_err(|e| invalid(format!("features.selection: {e}")))?;
        self.eval.utility.validate().map_err(|e| invalid(e.to_string()))?;
        let t = &self.eval.thresholds;
        if t.is_empty() || t.iter().any(|&x| !(x > 0.0 && x < 1.0)) || t.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("eval.thresholds must be non-empty, strictly increasing and inside (0, 1)"));
        }
        if self.paths.input.is_none() {
            self.synth.validate().map_err(|e| invalid(e.to_string()))?;
        }
        Ok(())
    }

    pub fn load_schema(&self) -> Result<FeatureSchema<f64>, PipelineError> {
        match &self.schema.path {
            Some(p) => FeatureSchema::load(p).map_err(|e| invalid(e.to_string())),
            None => Ok(FeatureSchema::default_schema()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml_string();
        for section in ["[paths]", "[schema]", "[cleaning]", "[features]", "[train]", "[eval]", "[routing]", "[synth]"] {
            assert!(text.contains(section), "missing {section}");
        }
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg = RunConfig::from_toml_str("seed = 4\n[train]\ntrain_fraction = 0.7\n[train.full]\nrounds = 10\n").unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.train.full.rounds, 10);
        assert_eq!(cfg.train.full.max_depth, 6);
        assert_eq!(cfg.eval.thresholds.len(), 9);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn validation_errors() {
        let missing = RunConfig {
            schema: SchemaConfig { path: Some("/nonexistent/schema.toml".into()) },
            ..Default::default()
        };
        assert!(matches!(missing.validate(), Err(PipelineError::Validation(_))));
        let mut bad = RunConfig::default();
        bad.train.train_fraction = 1.0;
        assert!(bad.validate().is_err());
        let mut bad = RunConfig::default();
        bad.eval.thresholds = vec![0.5, 0.2];
        assert!(bad.validate().is_err());
        assert!(RunConfig::from_toml_str("seed = \"x\"").is_err());
        assert!(RunConfig::from_toml_str("[train]\nunknown_key = 1\n").is_err());
    }
}

use serde::{Deserialize, Serialize};

use super::GbdtError;

/// Stepwise exponential decay: `eta_m = eta_0 * factor^floor(m / every_k_rounds)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LrDecay {
    pub factor: f64,
    pub every_k_rounds: usize,
}

impl Default for LrDecay {
    fn default() -> Self {
        Self {
            factor: 0.99,
            every_k_rounds: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainParams {
    pub rounds: usize,
    pub initial_learning_rate: f64,
    pub lr_decay: LrDecay,
    pub max_depth: usize,
    pub max_bins: usize,
    pub min_child_weight: f64,
    pub l2_lambda: f64,
    pub subsample_rows: f64,
    pub seed: u64,
    pub early_stopping_rounds: Option<usize>,
    /// Weight on positive rows in the log loss. 1 disables class weighting.
    pub positive_weight: f64,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            rounds: 3000,
            initial_learning_rate: 0.01,
            lr_decay: LrDecay::default(),
            max_depth: 6,
            max_bins: 256,
            min_child_weight: 1.0,
            l2_lambda: 1.0,
            subsample_rows: 1.0,
            seed: 0,
            early_stopping_rounds: None,
            positive_weight: 1.0,
        }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<(), GbdtError> {
        let bad = |m: &str| Err(GbdtError::InvalidParams(m.to_string()));
        if !(self.initial_learning_rate > 0.0) || !self.initial_learning_rate.is_finite() {
            return bad("initial_learning_rate must be positive");
        }
        if !(self.lr_decay.factor > 0.0 && self.lr_decay.factor <= 1.0) || self.lr_decay.every_k_rounds == 0 {
            return bad("lr_decay needs factor in (0, 1] and every_k_rounds >= 1");
        }
        if self.max_bins < 2 || self.max_bins > u16::MAX as usize - 1 {
            return bad("max_bins must be in [2, 65534]");
        }
        if !(self.min_child_weight >= 0.0) || !(self.l2_lambda >= 0.0) {
            return bad("min_child_weight and l2_lambda must be non-negative");
        }
        if !(self.subsample_rows > 0.0 && self.subsample_rows <= 1.0) {
            return bad("subsample_rows must be in (0, 1]");
        }
        if !(self.positive_weight > 0.0) || !self.positive_weight.is_finite() {
            return bad("positive_weight must be positive");
        }
        if self.early_stopping_rounds == Some(0) {
            return bad("early_stopping_rounds must be positive");
        }
        Ok(())
    }

    pub fn learning_rate(&self, round: usize) -> f64 {
        let steps = (round / self.lr_decay.every_k_rounds) as i32;
        self.initial_learning_rate * self.lr_decay.factor.powi(steps)
    }
}

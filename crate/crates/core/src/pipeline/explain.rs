use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::frame::FeatureFrame;
use crate::gbdt::{shap_frame, ModelArtifact};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureShare {
    pub name: String,
    pub mean_abs_attribution: f64,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainReport {
    pub rows: usize,
    pub top_k: usize,
    pub top: Vec<FeatureShare>,
    pub remaining_features: usize,
    pub remaining_percent: f64,
    /// Set when the model has no splits, so every share is 0.
    pub no_splits: bool,
    pub warnings: Vec<String>,
}

/// Mean absolute tree-Shapley attribution per feature as a percentage of
/// the total, with the `top_k` largest listed and the rest aggregated.
pub fn explain_report<T: Scalar>(
    model: &ModelArtifact<T>,
    frame: &FeatureFrame<T>,
    top_k: usize,
) -> Result<ExplainReport, PipelineError> {
    let mut warnings = Vec::new();
    let n_features = model.n_features();
    let k = if top_k > n_features {
        warnings.push(format!("top_k {top_k} exceeds {n_features} features; clamped"));
        n_features
    } else {
        top_k
    };
    let attributions = shap_frame(model, frame).map_err(|e| PipelineError::stage("explain", e.to_string()))?;
    let rows = attributions.len();
    let mut mean_abs = vec![0.0f64; n_features];
    for a in &attributions {
        for (m, p) in mean_abs.iter_mut().zip(&a.phi) {
            *m += p.as_f64().abs();
        }
    }
    if rows > 0 {
        mean_abs.iter_mut().for_each(|m| *m /= rows as f64);
    }
    let total: f64 = mean_abs.iter().sum();
    let no_splits = model.n_splits() == 0;
    let mut shares: Vec<FeatureShare> = model
        .feature_names
        .iter()
        .zip(&mean_abs)
        .map(|(name, &m)| FeatureShare {
            name: name.clone(),
            mean_abs_attribution: m,
            percent: if total > 0.0 { 100.0 * m / total } else { 0.0 },
        })
        .collect();
    shares.sort_by(|a, b| {
        b.mean_abs_attribution
            .total_cmp(&a.mean_abs_attribution)
            .then_with(|| a.name.cmp(&b.name))
    });
    let rest = shares.split_off(k);
    Ok(ExplainReport {
        rows,
        top_k: k,
        top: shares,
        remaining_features: rest.len(),
        remaining_percent: rest.iter().map(|s| s.percent).sum(),
        no_splits,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gbdt::{quantile_bin, train, TrainParams};

    fn frame(n: usize) -> (FeatureFrame<f64>, Vec<u8>) {
        let a: Vec<f64> = (0..n).map(|i| (i % 17) as f64).collect();
        let b: Vec<f64> = (0..n).map(|i| (i * 7 % 13) as f64).collect();
        let y = a.iter().zip(&b).map(|(x, z)| u8::from(x + 0.3 * z > 9.0)).collect();
        (FeatureFrame::from_columns(n, vec![("a".into(), a), ("b".into(), b), ("c".into(), vec![1.0; n])]).unwrap(), y)
    }

    #[test]
    fn base_only_reports_no_splits() {
        let (f, _) = frame(20);
        let m = ModelArtifact::base_only(0.3, f.names().to_vec());
        let r = explain_report(&m, &f, 20).unwrap();
        assert!(r.no_splits);
        assert!(r.top.iter().all(|s| s.percent == 0.0));
        assert_eq!(r.top_k, 3);
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn single_feature_is_everything() {
        let (f, y) = frame(200);
        let one = f.select(&["a".to_string()]).unwrap();
        let (m, _) = train(&quantile_bin(&one, 32).unwrap(), &y, &TrainParams { rounds: 5, initial_learning_rate: 0.3, ..Default::default() }, None).unwrap();
        let r = explain_report(&m, &one, 1).unwrap();
        assert_eq!(r.top[0].name, "a");
        assert!((r.top[0].percent - 100.0).abs() < 1e-9);
    }

    #[test]
    fn percentages_sum_to_100() {
        let (f, y) = frame(300);
        let (m, _) = train(&quantile_bin(&f, 32).unwrap(), &y, &TrainParams { rounds: 20, initial_learning_rate: 0.3, max_depth: 3, ..Default::default() }, None).unwrap();
        let r = explain_report(&m, &f, 1).unwrap();
        assert_eq!(r.top[0].name, "a");
        assert_eq!(r.remaining_features, 2);
        let sum: f64 = r.top.iter().map(|s| s.percent).sum::<f64>() + r.remaining_percent;
        assert!((sum - 100.0).abs() <= 0.01);
    }
}

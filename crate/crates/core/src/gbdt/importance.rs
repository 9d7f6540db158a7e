//! Permutation importance on held-out rows.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::artifact::ModelArtifact;
use super::loss::{auroc, logloss_one};
use super::GbdtError;
use crate::frame::FeatureFrame;
use crate::rng::stream;
use crate::scalar::{sigmoid, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceMetric {
    #[default]
    NegLogLoss,
    Auroc,
}

impl FromStr for ImportanceMetric {
    type Err = GbdtError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "neg_log_loss" => Ok(Self::NegLogLoss),
            "auroc" => Ok(Self::Auroc),
            o => Err(GbdtError::InvalidParams(format!("unknown importance metric `{o}`"))),
        }
    }
}

impl fmt::Display for ImportanceMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::NegLogLoss => "neg_log_loss",
            Self::Auroc => "auroc",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FeatureImportance<T> {
    pub name: String,
    pub mean: T,
    pub std: T,
}

fn score<T: Scalar>(metric: ImportanceMetric, margins: &[T], labels: &[u8]) -> Result<T, GbdtError> {
    match metric {
        ImportanceMetric::NegLogLoss => {
            let s: T = margins.iter().zip(labels).map(|(&z, &y)| logloss_one(sigmoid(z), y)).sum();
            Ok(-(s / T::of_usize(margins.len())))
        }
        ImportanceMetric::Auroc => auroc(margins, labels).ok_or(GbdtError::MetricUndefined("auroc needs both classes")),
    }
}

/// Importance of every model feature.
pub fn permutation_importance<T: Scalar>(
    model: &ModelArtifact<T>,
    frame: &FeatureFrame<T>,
    labels: &[u8],
    metric: ImportanceMetric,
    repeats: usize,
    seed: u64,
) -> Result<Vec<FeatureImportance<T>>, GbdtError> {
    permutation_importance_for(model, frame, labels, metric, repeats, seed, &model.feature_names)
}

/// Importance of the listed model features: `metric(original) -
/// metric(permuted)` per repeat, summarized by mean and population standard
/// deviation. Features no tree splits on score exactly 0 without being
/// permuted.
pub fn permutation_importance_for<T: Scalar>(
    model: &ModelArtifact<T>,
    frame: &FeatureFrame<T>,
    labels: &[u8],
    metric: ImportanceMetric,
    repeats: usize,
    seed: u64,
    features: &[String],
) -> Result<Vec<FeatureImportance<T>>, GbdtError> {
    if repeats < 1 {
        return Err(GbdtError::InvalidParams("repeats must be at least 1".into()));
    }
    if labels.len() != frame.n_rows() {
        return Err(GbdtError::Shape(format!("{} labels for {} rows", labels.len(), frame.n_rows())));
    }
    if frame.n_rows() == 0 {
        return Err(GbdtError::EmptyData);
    }
    let cols = frame
        .resolve(&model.feature_names)
        .map_err(|e| GbdtError::FeatureLayout(e.to_string()))?;
    let n = frame.n_rows();
    // Per-tree contributions, so a permutation only re-walks trees that
    // split on the permuted feature.
    let contrib: Vec<Vec<T>> = model
        .trees
        .par_iter()
        .map(|t| (0..n).map(|r| t.predict_with(|f| cols[f][r])).collect())
        .collect();
    let sum_margins = |replaced: &[Option<Vec<T>>]| -> Vec<T> {
        (0..n)
            .map(|r| {
                let mut z = model.base_score;
                for (t, c) in contrib.iter().enumerate() {
                    z += match &replaced[t] {
                        Some(v) => v[r],
                        None => c[r],
                    };
                }
                z
            })
            .collect()
    };
    let baseline = score(metric, &sum_margins(&vec![None; contrib.len()]), labels)?;

    features
        .par_iter()
        .map(|name| {
            let f = model
                .feature_names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| GbdtError::FeatureLayout(format!("`{name}` is not a model feature")))?;
            let touching: Vec<usize> = (0..model.trees.len())
                .filter(|&t| model.trees[t].features_used().any(|u| u == f))
                .collect();
            if touching.is_empty() {
                return Ok(FeatureImportance {
                    name: name.clone(),
                    mean: T::zero(),
                    std: T::zero(),
                });
            }
            let mut deltas = Vec::with_capacity(repeats);
            for k in 0..repeats {
                let mut rng = stream(seed, &format!("permutation:{name}"), k as u64);
                let mut perm: Vec<T> = cols[f].to_vec();
                perm.shuffle(&mut rng);
                let mut replaced: Vec<Option<Vec<T>>> = vec![None; contrib.len()];
                for &t in &touching {
                    let tree = &model.trees[t];
                    replaced[t] = Some(
                        (0..n)
                            .map(|r| tree.predict_with(|g| if g == f { perm[r] } else { cols[g][r] }))
                            .collect(),
                    );
                }
                deltas.push(baseline - score(metric, &sum_margins(&replaced), labels)?);
            }
            let k = T::of_usize(repeats);
            let mean = deltas.iter().copied().sum::<T>() / k;
            let var = deltas.iter().map(|d| (*d - mean) * (*d - mean)).sum::<T>() / k;
            Ok(FeatureImportance {
                name: name.clone(),
                mean,
                std: var.sqrt(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gbdt::{quantile_bin, train, TrainParams};
    use rand::{Rng, SeedableRng};

    fn data(n: usize, seed: u64) -> (FeatureFrame<f64>, Vec<u8>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let s: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let noise: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = s.iter().map(|&v| u8::from(v + rng.random_range(-0.3..0.3) > 0.0)).collect();
        let f = FeatureFrame::from_columns(
            n,
            vec![("signal".into(), s), ("noise".into(), noise), ("constant".into(), vec![1.0; n])],
        )
        .unwrap();
        (f, y)
    }

    #[test]
    fn signal_beats_noise_and_constant_is_zero() {
        let (f, y) = data(1000, 1);
        let b = quantile_bin(&f, 32).unwrap();
        let p = TrainParams { rounds: 30, initial_learning_rate: 0.3, max_depth: 3, ..Default::default() };
        let (m, _) = train(&b, &y, &p, None).unwrap();
        let (vf, vy) = data(500, 2);
        for metric in [ImportanceMetric::NegLogLoss, ImportanceMetric::Auroc] {
            let imp = permutation_importance(&m, &vf, &vy, metric, 3, 7).unwrap();
            assert!(imp[0].mean > 0.0);
            assert!(imp[0].mean > imp[1].mean);
            assert_eq!(imp[2].mean, 0.0);
            assert_eq!(imp[2].std, 0.0);
        }
        let again = permutation_importance(&m, &vf, &vy, ImportanceMetric::NegLogLoss, 3, 7).unwrap();
        assert_eq!(again, permutation_importance(&m, &vf, &vy, ImportanceMetric::NegLogLoss, 3, 7).unwrap());
    }

    #[test]
    fn constant_column_used_by_tree_scores_zero() {
        // A tree that splits on a column whose held-out values are constant:
        // every permutation leaves predictions unchanged.
        let (f, y) = data(300, 3);
        let b = quantile_bin(&f, 16).unwrap();
        let (m, _) = train(&b, &y, &TrainParams { rounds: 5, initial_learning_rate: 0.3, ..Default::default() }, None).unwrap();
        let mut vf = FeatureFrame::new(50);
        vf.push_column("signal", vec![0.25; 50]).unwrap();
        vf.push_column("noise", vec![0.0; 50]).unwrap();
        vf.push_column("constant", vec![1.0; 50]).unwrap();
        let imp = permutation_importance(&m, &vf, &y[..50], ImportanceMetric::NegLogLoss, 4, 1).unwrap();
        assert!(imp.iter().all(|i| i.mean == 0.0));
    }

    #[test]
    fn zero_repeats_rejected() {
        let (f, y) = data(20, 4);
        let m = ModelArtifact::base_only(0.0, f.names().to_vec());
        assert!(permutation_importance(&m, &f, &y, ImportanceMetric::NegLogLoss, 0, 1).is_err());
    }
}

use serde::{Deserialize, Serialize};

use super::config::RoutingPolicy;
use super::PipelineError;
use crate::evaluation::ScoredEncounter;
use crate::features::{FeatureMatrix, Statistic};
use crate::gbdt::ModelArtifact;
use crate::model::EncounterId;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Route {
    Full,
    Nonstat,
}

impl Route {
    pub fn as_str(self) -> &'static str {
        match self {
            Route::Full => "full",
            Route::Nonstat => "nonstat",
        }
    }
}

/// Row-aligned probabilities plus the model each encounter went through.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutedPredictions<T> {
    pub probabilities: Vec<T>,
    pub routes: Vec<(EncounterId, Route)>,
    pub full_rows: usize,
    pub nonstat_rows: usize,
}

impl<T: Scalar> RoutedPredictions<T> {
    /// Per-encounter view for evaluation, using the matrix's original labels.
    pub fn scored(&self, matrix: &FeatureMatrix<T>) -> Vec<ScoredEncounter<T>> {
        matrix
            .encounter_ranges()
            .into_iter()
            .map(|(id, r)| ScoredEncounter {
                encounter_id: id,
                labels: matrix.labels[r.clone()].to_vec(),
                probabilities: self.probabilities[r].to_vec(),
            })
            .collect()
    }
}

/// Scores encounters shorter than `min_hours_for_stats` with the
/// non-statistical model and all others with the full model. Fails when a
/// short encounter exists and no non-statistical model is available.
pub fn route_and_predict<T: Scalar>(
    matrix: &FeatureMatrix<T>,
    full: &ModelArtifact<T>,
    nonstat: Option<&ModelArtifact<T>>,
    policy: &RoutingPolicy,
) -> Result<RoutedPredictions<T>, PipelineError> {
    if let Some(m) = nonstat {
        if let Some(f) = m.feature_names.iter().find(|f| Statistic::parse_column(f).is_some()) {
            return Err(PipelineError::stage("route", format!("non-statistical model uses statistical feature `{f}`")));
        }
    }
    let ranges = matrix.encounter_ranges();
    let mut full_rows = Vec::new();
    let mut short_rows = Vec::new();
    let mut routes = Vec::with_capacity(ranges.len());
    for (id, r) in &ranges {
        if r.len() < policy.min_hours_for_stats {
            short_rows.extend(r.clone());
            routes.push((*id, Route::Nonstat));
        } else {
            full_rows.extend(r.clone());
            routes.push((*id, Route::Full));
        }
    }
    let mut probabilities = vec![T::missing(); matrix.n_rows()];
    let mut run = |model: &ModelArtifact<T>, rows: &[usize], which: &str| -> Result<(), PipelineError> {
        if rows.is_empty() {
            return Ok(());
        }
        let frame = matrix.frame.take_rows(rows);
        let p = model
            .predict_proba(&frame)
            .map_err(|e| PipelineError::stage("route", format!("{which} model: {e}")))?;
        for (&r, v) in rows.iter().zip(p) {
            probabilities[r] = v;
        }
        Ok(())
    };
    run(full, &full_rows, "full")?;
    if !short_rows.is_empty() {
        let m = nonstat.ok_or_else(|| {
            PipelineError::stage(
                "route",
                format!(
                    "{} encounters have fewer than {} rows but no non-statistical model is available",
                    routes.iter().filter(|(_, r)| *r == Route::Nonstat).count(),
                    policy.min_hours_for_stats
                ),
            )
        })?;
        run(m, &short_rows, "non-statistical")?;
    }
    Ok(RoutedPredictions {
        probabilities,
        routes,
        full_rows: full_rows.len(),
        nonstat_rows: short_rows.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::MatrixBlocks;
    use crate::frame::FeatureFrame;
    use crate::gbdt::{Node, Tree};

    fn matrix(lens: &[usize]) -> FeatureMatrix<f64> {
        let n: usize = lens.iter().sum();
        let mut ids = Vec::new();
        let mut hours = Vec::new();
        for (i, &l) in lens.iter().enumerate() {
            ids.extend(std::iter::repeat_n(i as u64, l));
            hours.extend(0..l);
        }
        let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let frame = FeatureFrame::from_columns(n, vec![("hr".into(), x.clone()), ("slope_hr".into(), x)]).unwrap();
        FeatureMatrix {
            frame,
            encounter_ids: ids,
            hours,
            labels: vec![0; n],
            shifted_labels: vec![0; n],
            blocks: MatrixBlocks {
                original: vec!["hr".into()],
                statistical: vec!["slope_hr".into()],
                ..Default::default()
            },
        }
    }

    fn stump(feature: &str, value: f64) -> ModelArtifact<f64> {
        let mut m = ModelArtifact::base_only(0.0, vec![feature.into()]);
        m.trees.push(Tree {
            nodes: vec![Node::Leaf { value, cover: Some(1.0) }],
        });
        m
    }

    #[test]
    fn partition_covers_every_row_once() {
        let m = matrix(&[1, 5, 1, 3]);
        let full = stump("slope_hr", 2.0);
        let ns = stump("hr", -2.0);
        let p = route_and_predict(&m, &full, Some(&ns), &RoutingPolicy::default()).unwrap();
        assert_eq!(p.full_rows + p.nonstat_rows, m.n_rows());
        assert_eq!(p.nonstat_rows, 2);
        assert!(p.probabilities.iter().all(|v| !v.is_nan()));
        let hi = crate::scalar::sigmoid(2.0);
        approx::assert_relative_eq!(p.probabilities[0], 1.0 - hi, epsilon = 1e-12);
        assert_eq!(p.probabilities[1], hi);
        assert_eq!(p.routes[2], (2, Route::Nonstat));
    }

    #[test]
    fn no_short_encounters_matches_full_model() {
        let m = matrix(&[3, 4]);
        let full = stump("slope_hr", 0.7);
        let p = route_and_predict(&m, &full, None, &RoutingPolicy::default()).unwrap();
        assert_eq!(p.probabilities, full.predict_proba(&m.frame).unwrap());
    }

    #[test]
    fn missing_or_wrong_nonstat_model_fails() {
        let m = matrix(&[1, 4]);
        let full = stump("slope_hr", 0.7);
        assert!(route_and_predict(&m, &full, None, &RoutingPolicy::default()).is_err());
        let wrong = stump("slope_hr", 0.1);
        assert!(route_and_predict(&m, &full, Some(&wrong), &RoutingPolicy::default()).is_err());
        let unknown = stump("nope", 0.1);
        assert!(route_and_predict(&m, &full, Some(&unknown), &RoutingPolicy::default()).is_err());
    }
}

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::PreprocessError;
use crate::model::CohortFrame;
use crate::scalar::Scalar;
use crate::schema::{ColumnSpec, Role};

pub fn mask_name(feature: &str) -> String {
    format!("mask_{feature}")
}

/// Adds one `mask_<feature>` column per feature: 1 where observed, 0 where
/// missing. Must run before imputation.
pub fn build_masks<T: Scalar>(
    cohort: &CohortFrame<T>,
    features: &[String],
) -> Result<CohortFrame<T>, PreprocessError> {
    let mut out = cohort.clone();
    let before = out.counts();
    for f in features {
        let c = out.schema().require(f)?;
        out.add_column(ColumnSpec::new(mask_name(f), Role::Mask), |e| {
            e.column(c)
                .iter()
                .map(|v| if v.is_missing() { T::zero() } else { T::one() })
                .collect()
        })?;
    }
    out.record_since("build_masks", before, format!("{} masks", features.len()));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ImputePolicy {
    /// Linear interpolation between observed points; uses future values.
    #[default]
    Retrospective,
    /// Last observation carried forward; row `t` depends on rows `<= t` only.
    Causal,
}

impl FromStr for ImputePolicy {
    type Err = PreprocessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "retrospective" | "linear" => Ok(Self::Retrospective),
            "causal" | "locf" => Ok(Self::Causal),
            other => Err(PreprocessError::UnknownPolicy(other.to_string())),
        }
    }
}

impl fmt::Display for ImputePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Retrospective => "retrospective",
            Self::Causal => "causal",
        })
    }
}

/// Fills interior gaps by linear interpolation. Leading and trailing gaps
/// stay missing.
pub fn interpolate_linear<T: Scalar>(x: &mut [T]) {
    let mut prev: Option<usize> = None;
    for j in 0..x.len() {
        if x[j].is_missing() {
            continue;
        }
        if let Some(i) = prev {
            if j > i + 1 {
                let (a, b) = (x[i], x[j]);
                let (lo, hi) = (a.min(b), a.max(b));
                let span = T::of_usize(j - i);
                for t in (i + 1)..j {
                    let frac = T::of_usize(t - i) / span;
                    x[t] = (a + (b - a) * frac).max(lo).min(hi);
                }
            }
        }
        prev = Some(j);
    }
}

pub fn forward_fill<T: Scalar>(x: &mut [T]) {
    let mut last: Option<T> = None;
    for v in x.iter_mut() {
        match (v.observed(), last) {
            (Some(o), _) => last = Some(o),
            (None, Some(l)) => *v = l,
            (None, None) => {}
        }
    }
}

/// Replaces the leading gap with the first observed value.
pub fn back_fill_leading<T: Scalar>(x: &mut [T]) {
    if let Some(first) = x.iter().position(|v| !v.is_missing()) {
        let v = x[first];
        for y in &mut x[..first] {
            *y = v;
        }
    }
}

/// Per-encounter imputation of demographics, vitals and labs.
///
/// Demographics are forward filled; in retrospective mode they are also
/// back filled from their first observation. Vitals and labs are linearly
/// interpolated (retrospective) or carried forward (causal).
pub fn impute<T: Scalar>(cohort: &CohortFrame<T>, policy: ImputePolicy) -> CohortFrame<T> {
    let schema = cohort.schema();
    let demo = schema.indices_with_role(Role::Demographic);
    let meas: Vec<usize> = schema
        .columns()
        .iter()
        .enumerate()
        .filter(|(_, c)| c.role.is_measurement())
        .map(|(i, _)| i)
        .collect();
    let mut out = cohort.clone();
    let before = out.counts();
    out.encounters_mut().par_iter_mut().for_each(|e| {
        for &c in &demo {
            let col = e.column_mut(c);
            forward_fill(col);
            if policy == ImputePolicy::Retrospective {
                back_fill_leading(col);
            }
        }
        for &c in &meas {
            let col = e.column_mut(c);
            match policy {
                ImputePolicy::Retrospective => interpolate_linear(col),
                ImputePolicy::Causal => forward_fill(col),
            }
        }
    });
    out.record_since("impute", before, policy.to_string());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{epoch, tiny_schema, EncounterSeries};
    use proptest::prelude::*;

    const M: f64 = f64::NAN;

    fn bits(v: &[f64]) -> Vec<u64> {
        v.iter().map(|x| x.to_bits()).collect()
    }

    #[test]
    fn linear_examples() {
        let mut x = [1.0, M, 3.0];
        interpolate_linear(&mut x);
        assert_eq!(x, [1.0, 2.0, 3.0]);
        let mut y = [M, 2.0, 4.0];
        interpolate_linear(&mut y);
        assert!(y[0].is_nan());
        assert_eq!(&y[1..], &[2.0, 4.0]);
        let mut z = [2.0, M, M];
        interpolate_linear(&mut z);
        assert!(z[1].is_nan() && z[2].is_nan());
    }

    fn one_encounter(hr: &[f64], age: &[f64]) -> CohortFrame<f64> {
        let schema = tiny_schema();
        let mut e = EncounterSeries::empty(&schema, 1, epoch(), hr.len());
        e.column_mut(3).copy_from_slice(hr);
        e.column_mut(2).copy_from_slice(age);
        CohortFrame::from_encounters(schema, vec![e])
    }

    #[test]
    fn demographic_forward_fill() {
        let c = one_encounter(&[M, M, M], &[0.0, M, M]);
        let out = impute(&c, ImputePolicy::Retrospective);
        assert_eq!(out.encounters()[0].column(2), &[0.0, 0.0, 0.0]);
        let c = one_encounter(&[M, M, M], &[M, 51.0, M]);
        let out = impute(&c, ImputePolicy::Retrospective);
        assert_eq!(out.encounters()[0].column(2), &[51.0, 51.0, 51.0]);
    }

    #[test]
    fn causal_carries_forward() {
        let c = one_encounter(&[M, 2.0, M, 6.0, M], &[M; 5]);
        let out = impute(&c, ImputePolicy::Causal);
        let col = out.encounters()[0].column(3);
        assert!(col[0].is_nan());
        assert_eq!(&col[1..], &[2.0, 2.0, 6.0, 6.0]);
    }

    #[test]
    fn masks_built_before_imputation() {
        let c = one_encounter(&[1.2, M, 3.0], &[M; 3]);
        let masked = build_masks(&c, &["heart_rate".to_string()]).unwrap();
        let mc = masked.schema().index_of("mask_heart_rate").unwrap();
        assert_eq!(masked.schema().column(mc).role, Role::Mask);
        let imputed = impute(&masked, ImputePolicy::Retrospective);
        assert_eq!(imputed.encounters()[0].column(mc), &[1.0, 0.0, 1.0]);
        assert!((imputed.encounters()[0].column(3)[1] - 2.1).abs() < 1e-12);

        let all_missing = build_masks(&one_encounter(&[M, M], &[M, M]), &["heart_rate".to_string()]).unwrap();
        assert_eq!(all_missing.encounters()[0].column(mc), &[0.0, 0.0]);
        let full = build_masks(&one_encounter(&[5.0, 6.0], &[M, M]), &["heart_rate".to_string()]).unwrap();
        assert_eq!(full.encounters()[0].column(mc), &[1.0, 1.0]);
    }

    #[test]
    fn unknown_policy() {
        assert!(matches!("median".parse::<ImputePolicy>(), Err(PreprocessError::UnknownPolicy(_))));
        assert_eq!("causal".parse::<ImputePolicy>().unwrap(), ImputePolicy::Causal);
    }

    fn series() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(proptest::option::weighted(0.5, -50.0f64..50.0), 1..40)
            .prop_map(|v| v.into_iter().map(|x| x.unwrap_or(f64::NAN)).collect())
    }

    proptest! {
        #[test]
        fn observed_values_untouched(x in series()) {
            for policy in [ImputePolicy::Retrospective, ImputePolicy::Causal] {
                let c = one_encounter(&x, &vec![M; x.len()]);
                let out = impute(&c, policy);
                let col = out.encounters()[0].column(3);
                for (a, b) in x.iter().zip(col) {
                    if !a.is_nan() {
                        prop_assert_eq!(a.to_bits(), b.to_bits());
                    }
                }
            }
        }

        #[test]
        fn interpolated_values_bracketed(x in series()) {
            let mut y = x.clone();
            interpolate_linear(&mut y);
            let obs: Vec<usize> = (0..x.len()).filter(|&i| !x[i].is_nan()).collect();
            for w in obs.windows(2) {
                let (lo, hi) = (x[w[0]].min(x[w[1]]), x[w[0]].max(x[w[1]]));
                for t in w[0]..=w[1] {
                    prop_assert!(y[t] >= lo && y[t] <= hi);
                }
            }
        }

        #[test]
        fn causal_prefix_property(x in series(), cut in 1usize..40) {
            let cut = cut.min(x.len());
            let whole = impute(&one_encounter(&x, &vec![M; x.len()]), ImputePolicy::Causal);
            let prefix = impute(&one_encounter(&x[..cut], &vec![M; cut]), ImputePolicy::Causal);
            prop_assert_eq!(
                bits(&whole.encounters()[0].column(3)[..cut]),
                bits(prefix.encounters()[0].column(3))
            );
        }
    }
}

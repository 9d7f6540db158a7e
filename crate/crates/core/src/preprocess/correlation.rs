use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::PreprocessError;
use crate::model::CohortFrame;
use crate::scalar::Scalar;

/// Pairwise-complete Pearson correlations pooled over every row of every
/// encounter. Entries with fewer than two complete pairs, or with a
/// constant side, are stored as 0 and flagged undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CorrelationMatrix<T> {
    names: Vec<String>,
    values: Vec<T>,
    support: Vec<usize>,
    defined: Vec<bool>,
}

impl<T: Scalar> CorrelationMatrix<T> {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[i * self.len() + j]
    }

    pub fn support(&self, i: usize, j: usize) -> usize {
        self.support[i * self.len() + j]
    }

    pub fn is_defined(&self, i: usize, j: usize) -> bool {
        self.defined[i * self.len() + j]
    }

    /// Builds a matrix from explicit values (row-major, `n × n`). Every entry
    /// is marked defined with unbounded support.
    pub fn from_values(names: Vec<String>, values: Vec<T>) -> Result<Self, PreprocessError> {
        let n = names.len();
        if values.len() != n * n {
            return Err(PreprocessError::Shape(format!(
                "{} values for {n} features",
                values.len()
            )));
        }
        for i in 0..n {
            for j in 0..n {
                let v = values[i * n + j];
                if v != values[j * n + i] || v.is_nan() || v.abs() > T::one() {
                    return Err(PreprocessError::Shape(format!(
                        "entry ({i},{j}) not a symmetric correlation"
                    )));
                }
            }
        }
        Ok(Self {
            names,
            support: vec![usize::MAX; n * n],
            defined: vec![true; n * n],
            values,
        })
    }
}

/// Fraction of missing cells per named column, pooled over the cohort.
pub fn missing_fractions<T: Scalar>(
    cohort: &CohortFrame<T>,
    features: &[String],
) -> Result<Vec<T>, PreprocessError> {
    let rows = cohort.n_rows();
    features
        .iter()
        .map(|f| {
            let c = cohort.schema().require(f)?;
            if rows == 0 {
                return Ok(T::one());
            }
            let missing: usize = cohort
                .encounters()
                .iter()
                .map(|e| e.column(c).iter().filter(|v| v.is_missing()).count())
                .sum();
            Ok(T::of_usize(missing) / T::of_usize(rows))
        })
        .collect()
}

fn pooled_column<T: Scalar>(cohort: &CohortFrame<T>, c: usize) -> Vec<T> {
    let mut v = Vec::with_capacity(cohort.n_rows());
    for e in cohort.encounters() {
        v.extend_from_slice(e.column(c));
    }
    v
}

struct PairStats<T> {
    value: T,
    support: usize,
    defined: bool,
}

fn pair<T: Scalar>(x: &[T], mx: T, y: &[T], my: T) -> PairStats<T> {
    let (mut n, mut sx, mut sy, mut sxx, mut syy, mut sxy) =
        (0usize, T::zero(), T::zero(), T::zero(), T::zero(), T::zero());
    for (&a, &b) in x.iter().zip(y) {
        if a.is_missing() || b.is_missing() {
            continue;
        }
        let (a, b) = (a - mx, b - my);
        n += 1;
        sx += a;
        sy += b;
        sxx += a * a;
        syy += b * b;
        sxy += a * b;
    }
    if n < 2 {
        return PairStats { value: T::zero(), support: n, defined: false };
    }
    let nf = T::of_usize(n);
    let vx = sxx - sx * sx / nf;
    let vy = syy - sy * sy / nf;
    let cov = sxy - sx * sy / nf;
    if !(vx > T::zero()) || !(vy > T::zero()) {
        return PairStats { value: T::zero(), support: n, defined: false };
    }
    let r = (cov / (vx.sqrt() * vy.sqrt())).max(-T::one()).min(T::one());
    PairStats { value: r, support: n, defined: true }
}

/// Pearson correlation matrix over the named columns.
pub fn correlation_matrix<T: Scalar>(
    cohort: &CohortFrame<T>,
    features: &[String],
) -> Result<CorrelationMatrix<T>, PreprocessError> {
    if features.len() < 2 {
        return Err(PreprocessError::TooFewFeatures(features.len()));
    }
    let cols: Vec<Vec<T>> = features
        .iter()
        .map(|f| Ok(pooled_column(cohort, cohort.schema().require(f)?)))
        .collect::<Result<_, PreprocessError>>()?;
    let means: Vec<T> = cols
        .iter()
        .map(|c| {
            let (s, n) = c
                .iter()
                .filter(|v| !v.is_missing())
                .fold((T::zero(), 0usize), |(s, n), &v| (s + v, n + 1));
            if n == 0 {
                T::zero()
            } else {
                s / T::of_usize(n)
            }
        })
        .collect();
    let n = features.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let stats: Vec<PairStats<T>> = pairs
        .par_iter()
        .map(|&(i, j)| pair(&cols[i], means[i], &cols[j], means[j]))
        .collect();
    let mut values = vec![T::zero(); n * n];
    let mut support = vec![0usize; n * n];
    let mut defined = vec![false; n * n];
    for (&(i, j), s) in pairs.iter().zip(stats) {
        let (v, d) = if i == j {
            (if s.support > 1 { T::one() } else { T::zero() }, s.support > 1)
        } else {
            (s.value, s.defined)
        };
        for (a, b) in [(i, j), (j, i)] {
            values[a * n + b] = v;
            support[a * n + b] = s.support;
            defined[a * n + b] = d;
        }
    }
    Ok(CorrelationMatrix {
        names: features.to_vec(),
        values,
        support,
        defined,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{epoch, EncounterSeries};
    use crate::schema::{ColumnSpec, FeatureSchema, Role};
    use rand::{Rng, SeedableRng};

    fn cohort(cols: &[(&str, Vec<Option<f64>>)]) -> CohortFrame<f64> {
        let mut specs = vec![
            ColumnSpec::new("encounter_id", Role::Id),
            ColumnSpec::new("sepsis_label", Role::Label),
        ];
        for (n, _) in cols {
            specs.push(ColumnSpec::new(*n, Role::Vital).with_unit("u"));
        }
        let schema = FeatureSchema::new(specs).unwrap();
        let len = cols[0].1.len();
        let mut e = EncounterSeries::empty(&schema, 1, epoch(), len);
        for (k, (_, v)) in cols.iter().enumerate() {
            for (t, x) in v.iter().enumerate() {
                e.set(k + 2, t, *x);
            }
        }
        CohortFrame::from_encounters(schema, vec![e])
    }

    fn names(n: &[&str]) -> Vec<String> {
        n.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn duplicate_and_negated_columns() {
        let x: Vec<Option<f64>> = (0..20).map(|i| Some((i as f64).sin() * 3.0 + 1.0)).collect();
        let neg: Vec<Option<f64>> = x.iter().map(|v| v.map(|a| -a)).collect();
        let c = cohort(&[("a", x.clone()), ("b", x), ("c", neg)]);
        let m = correlation_matrix(&c, &names(&["a", "b", "c"])).unwrap();
        assert!((m.get(0, 1) - 1.0).abs() < 1e-12);
        assert!((m.get(0, 2) + 1.0).abs() < 1e-12);
        assert_eq!(m.get(1, 1), 1.0);
        assert_eq!(m.get(0, 2), m.get(2, 0));
    }

    #[test]
    fn independent_columns_are_nearly_uncorrelated() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let x: Vec<Option<f64>> = (0..10_000).map(|_| Some(rng.random::<f64>())).collect();
        let y: Vec<Option<f64>> = (0..10_000).map(|_| Some(rng.random::<f64>())).collect();
        // Direct two-pass formula as the reference.
        let xs: Vec<f64> = x.iter().map(|v| v.unwrap()).collect();
        let ys: Vec<f64> = y.iter().map(|v| v.unwrap()).collect();
        let mx = xs.iter().sum::<f64>() / 1e4;
        let my = ys.iter().sum::<f64>() / 1e4;
        let cov: f64 = xs.iter().zip(&ys).map(|(a, b)| (a - mx) * (b - my)).sum();
        let vx: f64 = xs.iter().map(|a| (a - mx).powi(2)).sum();
        let vy: f64 = ys.iter().map(|b| (b - my).powi(2)).sum();
        let direct = cov / (vx * vy).sqrt();

        let c = cohort(&[("x", x), ("y", y)]);
        let m = correlation_matrix(&c, &names(&["x", "y"])).unwrap();
        assert!((m.get(0, 1) - direct).abs() < 1e-10);
        assert!(m.get(0, 1).abs() < 0.05);
    }

    #[test]
    fn undefined_entries_flagged() {
        let c = cohort(&[
            ("k", vec![Some(2.0), Some(2.0), Some(2.0)]),
            ("v", vec![Some(1.0), Some(2.0), Some(4.0)]),
            ("s", vec![Some(1.0), None, None]),
        ]);
        let m = correlation_matrix(&c, &names(&["k", "v", "s"])).unwrap();
        assert!(!m.is_defined(0, 1));
        assert_eq!(m.get(0, 1), 0.0);
        assert_eq!(m.support(1, 2), 1);
        assert!(!m.is_defined(1, 2));
        assert!(!m.is_defined(2, 2));
    }

    #[test]
    fn errors() {
        let c = cohort(&[("a", vec![Some(1.0)])]);
        assert!(matches!(correlation_matrix(&c, &names(&["a"])), Err(PreprocessError::TooFewFeatures(1))));
        assert!(correlation_matrix(&c, &names(&["a", "zzz"])).is_err());
    }
}

//! Clinical scores and ratio features computed per hourly row.

use super::bands::BandTables;
use crate::model::EncounterSeries;
use crate::scalar::Scalar;
use crate::schema::FeatureSchema;

/// Raw physiological components the score tables may reference.
pub const COMPONENTS: [&str; 15] = [
    "temperature",
    "heart_rate",
    "resp_rate",
    "paco2",
    "wbc",
    "sbp",
    "gcs",
    "map",
    "platelets",
    "bilirubin",
    "creatinine",
    "pao2",
    "fio2",
    "sao2",
    "bun",
];

/// Components derived from other components.
pub const DERIVED_COMPONENTS: [&str; 2] = ["pao2_fio2", "sao2_fio2_surrogate"];

/// The clinical block, in matrix order.
pub const CLINICAL_COLUMNS: [&str; 7] = [
    "partial_sofa",
    "mews",
    "qsofa",
    "sirs",
    "shock_index",
    "bun_cr",
    "sao2_fio2",
];

/// Component values for one hour. Absent components are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClinicalRow<T> {
    values: [Option<T>; COMPONENTS.len()],
}

impl<T: Scalar> Default for ClinicalRow<T> {
    fn default() -> Self {
        Self {
            values: [None; COMPONENTS.len()],
        }
    }
}

fn slot(name: &str) -> Option<usize> {
    COMPONENTS.iter().position(|c| *c == name)
}

/// FiO2 as a fraction; percent values (> 1) are divided by 100.
pub fn fio2_fraction<T: Scalar>(fio2: T) -> T {
    if fio2 > T::one() {
        fio2 / T::of(100.0)
    } else {
        fio2
    }
}

fn ratio<T: Scalar>(num: Option<T>, den: Option<T>) -> Option<T> {
    match (num, den) {
        (Some(n), Some(d)) if d > T::zero() => Some(n / d),
        _ => None,
    }
}

impl<T: Scalar> ClinicalRow<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets a raw component. Panics on a name outside [`COMPONENTS`].
    pub fn with(mut self, name: &str, v: f64) -> Self {
        self.set(name, T::of(v).observed());
        self
    }

    pub fn set(&mut self, name: &str, v: Option<T>) {
        let i = slot(name).unwrap_or_else(|| panic!("unknown clinical component `{name}`"));
        self.values[i] = v.and_then(Scalar::observed);
    }

    /// Raw or derived component value.
    pub fn get(&self, name: &str) -> Option<T> {
        match name {
            "pao2_fio2" => ratio(self.get("pao2"), self.get("fio2").map(fio2_fraction)),
            "sao2_fio2_surrogate" => {
                if self.get("pao2").is_some() {
                    None
                } else {
                    ratio(self.get("sao2"), self.get("fio2").map(fio2_fraction))
                }
            }
            n => slot(n).and_then(|i| self.values[i]),
        }
    }
}

pub fn score_sirs<T: Scalar>(row: &ClinicalRow<T>) -> u32 {
    BandTables::builtin().sirs.score(row)
}

pub fn score_qsofa<T: Scalar>(row: &ClinicalRow<T>) -> u32 {
    BandTables::builtin().qsofa.score(row)
}

pub fn score_mews<T: Scalar>(row: &ClinicalRow<T>) -> u32 {
    BandTables::builtin().mews.score(row)
}

pub fn score_partial_sofa<T: Scalar>(row: &ClinicalRow<T>) -> u32 {
    BandTables::builtin().sofa.score(row)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ratios<T> {
    pub shock_index: Option<T>,
    pub bun_cr: Option<T>,
    pub sao2_fio2: Option<T>,
}

pub fn ratio_features<T: Scalar>(row: &ClinicalRow<T>) -> Ratios<T> {
    Ratios {
        shock_index: ratio(row.get("heart_rate"), row.get("sbp")),
        bun_cr: ratio(row.get("bun"), row.get("creatinine")),
        sao2_fio2: ratio(row.get("sao2"), row.get("fio2").map(fio2_fraction)),
    }
}

#[derive(Debug, Clone)]
enum Source {
    Exact(usize),
    /// Mean of whichever of `min_<c>` / `max_<c>` are observed.
    MinMax(Option<usize>, Option<usize>),
    Absent,
}

/// Maps each component to schema columns once, then reads rows.
#[derive(Debug, Clone)]
pub struct ComponentResolver {
    sources: Vec<Source>,
}

impl ComponentResolver {
    pub fn new<T: Scalar>(schema: &FeatureSchema<T>) -> Self {
        let sources = COMPONENTS
            .iter()
            .map(|c| {
                if let Some(i) = schema.index_of(c) {
                    return Source::Exact(i);
                }
                let lo = schema.index_of(&format!("min_{c}"));
                let hi = schema.index_of(&format!("max_{c}"));
                if lo.is_none() && hi.is_none() {
                    Source::Absent
                } else {
                    Source::MinMax(lo, hi)
                }
            })
            .collect();
        Self { sources }
    }

    pub fn row<T: Scalar>(&self, e: &EncounterSeries<T>, t: usize) -> ClinicalRow<T> {
        let mut row = ClinicalRow::default();
        for (k, s) in self.sources.iter().enumerate() {
            row.values[k] = match *s {
                Source::Exact(i) => e.value(i, t),
                Source::MinMax(lo, hi) => {
                    let a = lo.and_then(|i| e.value(i, t));
                    let b = hi.and_then(|i| e.value(i, t));
                    match (a, b) {
                        (Some(a), Some(b)) => Some((a + b) / T::of(2.0)),
                        (x, None) | (None, x) => x,
                    }
                }
                Source::Absent => None,
            };
        }
        row
    }
}

/// The seven clinical columns for one encounter, in [`CLINICAL_COLUMNS`]
/// order. Scores are always defined (missing components score 0); ratios
/// may be missing.
pub fn clinical_columns<T: Scalar>(
    resolver: &ComponentResolver,
    tables: &BandTables,
    e: &EncounterSeries<T>,
) -> Vec<Vec<T>> {
    let n = e.n_rows();
    let mut cols = vec![Vec::with_capacity(n); CLINICAL_COLUMNS.len()];
    for t in 0..n {
        let row = resolver.row(e, t);
        let r = ratio_features(&row);
        let vals = [
            Some(T::of(tables.sofa.score(&row) as f64)),
            Some(T::of(tables.mews.score(&row) as f64)),
            Some(T::of(tables.qsofa.score(&row) as f64)),
            Some(T::of(tables.sirs.score(&row) as f64)),
            r.shock_index,
            r.bun_cr,
            r.sao2_fio2,
        ];
        for (c, v) in cols.iter_mut().zip(vals) {
            c.push(v.unwrap_or_else(T::missing));
        }
    }
    cols
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    type R = ClinicalRow<f64>;

    #[test]
    fn sirs_examples() {
        let r = R::new().with("temperature", 39.0).with("heart_rate", 100.0).with("resp_rate", 22.0).with("wbc", 13.0);
        assert_eq!(score_sirs(&r), 4);
        assert_eq!(score_sirs(&R::new()), 0);
        let r = R::new().with("temperature", 37.0).with("heart_rate", 80.0).with("resp_rate", 16.0).with("wbc", 8.0);
        assert_eq!(score_sirs(&r), 0);
        // Hypothermia and leukopenia count; PaCO2 substitutes for RR.
        let r = R::new().with("temperature", 35.5).with("paco2", 30.0).with("wbc", 3.0);
        assert_eq!(score_sirs(&r), 3);
        // Fast RR and low PaCO2 together still count once.
        let r = R::new().with("resp_rate", 25.0).with("paco2", 30.0);
        assert_eq!(score_sirs(&r), 1);
    }

    #[test]
    fn qsofa_examples() {
        assert_eq!(score_qsofa(&R::new().with("resp_rate", 24.0).with("sbp", 95.0)), 2);
        assert_eq!(score_qsofa(&R::new()), 0);
        let r = R::new().with("resp_rate", 22.0).with("sbp", 100.0).with("gcs", 14.0);
        assert_eq!(score_qsofa(&r), 3);
        let r = R::new().with("resp_rate", 21.9).with("sbp", 100.1).with("gcs", 15.0);
        assert_eq!(score_qsofa(&r), 0);
    }

    #[test]
    fn mews_examples() {
        assert_eq!(score_mews(&R::new().with("sbp", 75.0)), 2);
        let normal = R::new().with("sbp", 120.0).with("heart_rate", 75.0).with("resp_rate", 12.0).with("temperature", 37.0);
        assert_eq!(score_mews(&normal), 0);
        assert_eq!(score_mews(&R::new()), 0);
        let bad = R::new().with("sbp", 65.0).with("heart_rate", 140.0).with("resp_rate", 32.0).with("temperature", 39.0);
        assert_eq!(score_mews(&bad), 3 + 3 + 3 + 2);
    }

    #[test]
    fn sofa_examples() {
        let t = BandTables::builtin();
        let r = R::new().with("platelets", 90.0);
        assert_eq!(t.sofa.criterion_points("coagulation", &r), 2);
        assert_eq!(score_partial_sofa(&r), 2);
        let r = R::new().with("map", 65.0);
        assert_eq!(t.sofa.criterion_points("cardiovascular", &r), 1);
        assert_eq!(score_partial_sofa(&R::new()), 0);
        // PF = 80 / 0.4 = 200 -> 2 points.
        let r = R::new().with("pao2", 80.0).with("fio2", 40.0);
        assert_eq!(t.sofa.criterion_points("respiration", &r), 2);
        // Surrogate only without PaO2: SF = 92 / 0.5 = 184 -> 3 points.
        let r = R::new().with("sao2", 92.0).with("fio2", 0.5);
        assert_eq!(t.sofa.criterion_points("respiration", &r), 3);
        let r = R::new().with("sao2", 92.0).with("fio2", 0.5).with("pao2", 90.0);
        assert_eq!(t.sofa.criterion_points("respiration", &r), 3);
        let worst = R::new()
            .with("platelets", 10.0)
            .with("bilirubin", 13.0)
            .with("map", 50.0)
            .with("creatinine", 6.0)
            .with("pao2", 50.0)
            .with("fio2", 1.0);
        assert_eq!(score_partial_sofa(&worst), 17);
    }

    #[test]
    fn ratio_examples() {
        let r = ratio_features(&R::new().with("heart_rate", 110.0).with("sbp", 100.0));
        assert!((r.shock_index.unwrap() - 1.1).abs() < 1e-12);
        let r = ratio_features(&R::new().with("bun", 20.0).with("creatinine", 0.0));
        assert_eq!(r.bun_cr, None);
        let r = ratio_features(&R::new().with("sao2", 95.0).with("fio2", 50.0));
        assert!((r.sao2_fio2.unwrap() - 190.0).abs() < 1e-12);
        assert_eq!(r.shock_index, None);
    }

    fn sirs_hr(hr: f64) -> u32 {
        score_sirs(&R::new().with("heart_rate", hr).with("temperature", 37.0))
    }

    proptest! {
        #[test]
        fn scores_bounded_and_monotone(
            temp in 30.0f64..43.0, hr in 20.0f64..220.0, rr in 4.0f64..50.0, sbp in 40.0f64..240.0,
            plt in 1.0f64..400.0, cr in 0.2f64..8.0, step in 0.0f64..40.0,
        ) {
            let r = R::new().with("temperature", temp).with("heart_rate", hr).with("resp_rate", rr)
                .with("sbp", sbp).with("platelets", plt).with("creatinine", cr);
            prop_assert!(score_sirs(&r) <= 4);
            prop_assert!(score_qsofa(&r) <= 3);
            prop_assert!(score_partial_sofa(&r) <= 20);
            // Deranged direction: rising HR above 90, falling platelets, rising creatinine.
            if hr > 90.0 {
                prop_assert!(sirs_hr(hr + step) >= sirs_hr(hr));
            }
            let plt_lower = R::new().with("platelets", (plt - step).max(0.0));
            prop_assert!(score_partial_sofa(&plt_lower) >= score_partial_sofa(&R::new().with("platelets", plt)));
            let cr_higher = R::new().with("creatinine", cr + step);
            prop_assert!(score_partial_sofa(&cr_higher) >= score_partial_sofa(&R::new().with("creatinine", cr)));
            let sbp_lower = R::new().with("sbp", (sbp - step).max(0.0));
            if sbp <= 199.0 {
                prop_assert!(score_mews(&sbp_lower) >= score_mews(&R::new().with("sbp", sbp)));
            }
        }
    }
}

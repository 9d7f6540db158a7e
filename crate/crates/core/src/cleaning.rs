//! Cohort filters and length of stay.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CohortFrame, EncounterSeries, ProvenanceEntry};
use crate::scalar::Scalar;
use crate::schema::{ColumnSpec, Role, SchemaError};

pub const LOS_COLUMN: &str = "los_hours";
pub const AGE_COLUMN: &str = "age";

#[derive(Debug, Error)]
pub enum CleaningError {
    #[error("invalid cleaning rules: {0}")]
    InvalidRules(String),
    #[error(transparent)]
    Schema(#[from] SchemaError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CleaningRules {
    pub min_stay_hours: usize,
    pub max_stay_hours: usize,
    pub max_age_years: f64,
    pub post_discharge_grace_hours: usize,
}

impl Default for CleaningRules {
    fn default() -> Self {
        Self {
            min_stay_hours: 5,
            max_stay_hours: 700,
            max_age_years: 105.0,
            post_discharge_grace_hours: 72,
        }
    }
}

impl CleaningRules {
    pub fn validate(&self) -> Result<(), CleaningError> {
        if self.min_stay_hours == 0 || self.max_stay_hours == 0 || self.post_discharge_grace_hours == 0 {
            return Err(CleaningError::InvalidRules("thresholds must be positive".into()));
        }
        if !(self.max_age_years > 0.0) {
            return Err(CleaningError::InvalidRules("max_age_years must be positive".into()));
        }
        if self.min_stay_hours >= self.max_stay_hours {
            return Err(CleaningError::InvalidRules(format!(
                "min_stay_hours {} must be below max_stay_hours {}",
                self.min_stay_hours, self.max_stay_hours
            )));
        }
        Ok(())
    }
}

/// Encounters and rows removed by one rule.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleCount {
    pub encounters: usize,
    pub rows: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleaningAudit {
    pub max_age: RuleCount,
    pub post_discharge: RuleCount,
    pub max_stay: RuleCount,
    pub min_stay: RuleCount,
}

impl CleaningAudit {
    pub fn rows_removed(&self) -> usize {
        self.max_age.rows + self.post_discharge.rows + self.max_stay.rows + self.min_stay.rows
    }

    pub fn is_zero(&self) -> bool {
        *self == Self::default()
    }
}

/// Hours since admission for each row: row `t` has LOS `t`.
pub fn compute_los<T: Scalar>(series: &EncounterSeries<T>) -> Vec<T> {
    (0..series.n_rows()).map(T::of_usize).collect()
}

/// Appends the `los_hours` derived column (no-op if already present).
pub fn add_los_column<T: Scalar>(cohort: &mut CohortFrame<T>) -> Result<(), CleaningError> {
    if cohort.schema().contains(LOS_COLUMN) {
        return Ok(());
    }
    cohort.add_column(
        ColumnSpec::new(LOS_COLUMN, Role::Derived).with_unit("h"),
        compute_los,
    )?;
    Ok(())
}

/// Age at admission: first observed value of the `age` column.
pub fn admission_age<T: Scalar>(cohort: &CohortFrame<T>, e: &EncounterSeries<T>) -> Option<T> {
    cohort
        .schema()
        .index_of(AGE_COLUMN)
        .and_then(|c| e.first_observed(c))
}

/// Applies, in order: age limit, post-discharge truncation, stay-length cap,
/// minimum stay. Surviving rows keep their order.
pub fn apply_cohort_filters<T: Scalar>(
    cohort: &CohortFrame<T>,
    rules: &CleaningRules,
) -> Result<(CohortFrame<T>, CleaningAudit), CleaningError> {
    rules.validate()?;
    let before = cohort.counts();
    let mut audit = CleaningAudit::default();
    let max_age = T::of(rules.max_age_years);
    let mut kept = Vec::with_capacity(cohort.n_encounters());
    for e in cohort.encounters() {
        if admission_age(cohort, e).is_some_and(|a| a > max_age) {
            audit.max_age.encounters += 1;
            audit.max_age.rows += e.n_rows();
            continue;
        }
        let mut e = e.clone();
        if let Some(dis) = e.discharge_time {
            let hours = (dis - e.admission_time).num_seconds().div_euclid(3600);
            // Rows at hour <= discharge + grace survive.
            let limit = (hours + rules.post_discharge_grace_hours as i64 + 1).max(0) as usize;
            if e.n_rows() > limit {
                audit.post_discharge.encounters += 1;
                audit.post_discharge.rows += e.n_rows() - limit;
                e.truncate(limit);
            }
        }
        if e.n_rows() > rules.max_stay_hours {
            audit.max_stay.encounters += 1;
            audit.max_stay.rows += e.n_rows() - rules.max_stay_hours;
            e.truncate(rules.max_stay_hours);
        }
        if e.n_rows() < rules.min_stay_hours {
            audit.min_stay.encounters += 1;
            audit.min_stay.rows += e.n_rows();
            continue;
        }
        kept.push(e);
    }
    let mut out = cohort.with_encounters(kept);
    out.record(ProvenanceEntry {
        operation: "apply_cohort_filters".into(),
        encounters_before: before.0,
        encounters_after: out.n_encounters(),
        rows_before: before.1,
        rows_after: out.n_rows(),
        detail: serde_json::to_string(&audit).expect("audit serializes"),
    });
    Ok((out, audit))
}

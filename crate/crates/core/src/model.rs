//! Encounters, hourly rows, cohorts and cohort validation.
//!
//! An encounter is stored column-major on a dense hourly grid: row `t` is
//! hour `t` since admission, so `hour_index` is strictly increasing with
//! step 1 by construction. Silent hours are rows whose values are all
//! missing. Structural columns (id, time, label) have no value storage;
//! labels live in their own vector.

use std::fmt;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::schema::{ColumnSpec, FeatureSchema, SchemaError};

pub type EncounterId = u64;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("encounter {encounter_id}: labels are not a monotone step function (drop at hour {hour})")]
    NonMonotoneLabels { encounter_id: EncounterId, hour: usize },
    #[error("encounter {encounter_id}: row has {got} values, schema has {expected} columns")]
    RowWidth {
        encounter_id: EncounterId,
        expected: usize,
        got: usize,
    },
    #[error("encounter {encounter_id}: row hour_index {got} where {expected} was expected")]
    HourSequence {
        encounter_id: EncounterId,
        expected: usize,
        got: usize,
    },
}

/// Default admission timestamp when a source carries none (1970-01-01T00:00).
pub fn epoch() -> NaiveDateTime {
    chrono::DateTime::from_timestamp(0, 0)
        .expect("epoch")
        .naive_utc()
}

/// One hour of one encounter, as an owned row. `values` is aligned with the
/// schema's columns; structural columns are always `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct HourlyRow<T> {
    pub encounter_id: EncounterId,
    pub hour_index: usize,
    pub values: Vec<Option<T>>,
    pub label: u8,
}

#[derive(Debug, Clone)]
pub struct EncounterSeries<T> {
    pub encounter_id: EncounterId,
    pub admission_time: NaiveDateTime,
    pub discharge_time: Option<NaiveDateTime>,
    labels: Vec<u8>,
    columns: Vec<Vec<T>>,
}

/// Missing cells compare equal to each other; observed cells compare by value.
impl<T: Scalar> PartialEq for EncounterSeries<T> {
    fn eq(&self, other: &Self) -> bool {
        self.encounter_id == other.encounter_id
            && self.admission_time == other.admission_time
            && self.discharge_time == other.discharge_time
            && self.labels == other.labels
            && self.columns.len() == other.columns.len()
            && self.columns.iter().zip(&other.columns).all(|(a, b)| {
                a.len() == b.len()
                    && a.iter()
                        .zip(b)
                        .all(|(x, y)| (x.is_missing() && y.is_missing()) || x == y)
            })
    }
}

impl<T: Scalar> EncounterSeries<T> {
    /// All-missing encounter with `n_rows` hours, all labels 0.
    pub fn empty(
        schema: &FeatureSchema<T>,
        encounter_id: EncounterId,
        admission_time: NaiveDateTime,
        n_rows: usize,
    ) -> Self {
        let columns = schema
            .columns()
            .iter()
            .map(|c| {
                if c.role.is_value() {
                    vec![T::missing(); n_rows]
                } else {
                    Vec::new()
                }
            })
            .collect();
        Self {
            encounter_id,
            admission_time,
            discharge_time: None,
            labels: vec![0; n_rows],
            columns,
        }
    }

    /// Builds from rows that must be numbered `0, 1, 2, ...`.
    pub fn from_rows(
        schema: &FeatureSchema<T>,
        encounter_id: EncounterId,
        admission_time: NaiveDateTime,
        rows: &[HourlyRow<T>],
    ) -> Result<Self, ModelError> {
        let mut s = Self::empty(schema, encounter_id, admission_time, rows.len());
        for (t, row) in rows.iter().enumerate() {
            if row.hour_index != t {
                return Err(ModelError::HourSequence {
                    encounter_id,
                    expected: t,
                    got: row.hour_index,
                });
            }
            if row.values.len() != schema.len() {
                return Err(ModelError::RowWidth {
                    encounter_id,
                    expected: schema.len(),
                    got: row.values.len(),
                });
            }
            s.labels[t] = row.label;
            for (c, v) in row.values.iter().enumerate() {
                if schema.column(c).role.is_value() {
                    s.columns[c][t] = v.unwrap_or_else(T::missing);
                }
            }
        }
        Ok(s)
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn labels_mut(&mut self) -> &mut [u8] {
        &mut self.labels
    }

    /// Raw column storage; missing cells are NaN. Empty for structural columns.
    pub fn column(&self, c: usize) -> &[T] {
        &self.columns[c]
    }

    pub fn column_mut(&mut self, c: usize) -> &mut [T] {
        &mut self.columns[c]
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn value(&self, c: usize, t: usize) -> Option<T> {
        self.columns[c].get(t).and_then(|v| v.observed())
    }

    pub fn set(&mut self, c: usize, t: usize, v: Option<T>) {
        self.columns[c][t] = v.unwrap_or_else(T::missing);
    }

    pub fn row(&self, t: usize) -> HourlyRow<T> {
        HourlyRow {
            encounter_id: self.encounter_id,
            hour_index: t,
            values: self.columns.iter().map(|c| c.get(t).and_then(|v| v.observed())).collect(),
            label: self.labels[t],
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = HourlyRow<T>> + '_ {
        (0..self.n_rows()).map(move |t| self.row(t))
    }

    /// First hour with label 1.
    pub fn onset_hour(&self) -> Result<Option<usize>, ModelError> {
        onset_of_labels(self.encounter_id, &self.labels)
    }

    pub fn is_septic(&self) -> bool {
        self.labels.contains(&1)
    }

    /// Keeps the first `n` rows.
    pub fn truncate(&mut self, n: usize) {
        self.labels.truncate(n);
        for c in &mut self.columns {
            c.truncate(n);
        }
    }

    /// First observed value of a column, scanning forward in time.
    pub fn first_observed(&self, c: usize) -> Option<T> {
        self.columns[c].iter().find_map(|v| v.observed())
    }

    pub(crate) fn push_column(&mut self, values: Vec<T>) {
        self.columns.push(values);
    }

    pub(crate) fn take_columns(&mut self, keep: &[usize]) {
        let mut old = std::mem::take(&mut self.columns);
        self.columns = keep.iter().map(|&i| std::mem::take(&mut old[i])).collect();
    }
}

/// `min { t : label_t = 1 }`, rejecting labels that drop back to 0.
pub fn onset_of_labels(encounter_id: EncounterId, labels: &[u8]) -> Result<Option<usize>, ModelError> {
    let onset = labels.iter().position(|&l| l != 0);
    if let Some(o) = onset {
        if let Some(k) = labels[o..].iter().position(|&l| l == 0) {
            return Err(ModelError::NonMonotoneLabels {
                encounter_id,
                hour: o + k,
            });
        }
    }
    Ok(onset)
}

/// Onset hour of an encounter: first hour with label 1, absent when all 0.
pub fn onset_of<T: Scalar>(series: &EncounterSeries<T>) -> Result<Option<usize>, ModelError> {
    series.onset_hour()
}

/// One audit entry per transformation applied to a cohort.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceEntry {
    pub operation: String,
    pub encounters_before: usize,
    pub encounters_after: usize,
    pub rows_before: usize,
    pub rows_after: usize,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct CohortFrame<T> {
    schema: FeatureSchema<T>,
    encounters: Vec<EncounterSeries<T>>,
    provenance: Vec<ProvenanceEntry>,
}

impl<T: Scalar> PartialEq for CohortFrame<T> {
    fn eq(&self, other: &Self) -> bool {
        self.schema == other.schema && self.encounters == other.encounters && self.provenance == other.provenance
    }
}

impl<T: Scalar> CohortFrame<T> {
    pub fn new(schema: FeatureSchema<T>) -> Self {
        Self {
            schema,
            encounters: Vec::new(),
            provenance: Vec::new(),
        }
    }

    pub fn from_encounters(schema: FeatureSchema<T>, encounters: Vec<EncounterSeries<T>>) -> Self {
        Self {
            schema,
            encounters,
            provenance: Vec::new(),
        }
    }

    pub fn schema(&self) -> &FeatureSchema<T> {
        &self.schema
    }

    pub fn encounters(&self) -> &[EncounterSeries<T>] {
        &self.encounters
    }

    pub fn encounters_mut(&mut self) -> &mut [EncounterSeries<T>] {
        &mut self.encounters
    }

    pub fn into_encounters(self) -> Vec<EncounterSeries<T>> {
        self.encounters
    }

    pub fn push(&mut self, e: EncounterSeries<T>) {
        self.encounters.push(e);
    }

    pub fn encounter(&self, id: EncounterId) -> Option<&EncounterSeries<T>> {
        self.encounters.iter().find(|e| e.encounter_id == id)
    }

    pub fn n_encounters(&self) -> usize {
        self.encounters.len()
    }

    pub fn n_rows(&self) -> usize {
        self.encounters.iter().map(|e| e.n_rows()).sum()
    }

    pub fn provenance(&self) -> &[ProvenanceEntry] {
        &self.provenance
    }

    /// Appends an audit entry. Never touches data.
    pub fn record(&mut self, entry: ProvenanceEntry) {
        self.provenance.push(entry);
    }

    /// Records an operation whose "before" counts are given and whose
    /// "after" counts are the cohort's current counts.
    pub fn record_since(
        &mut self,
        operation: &str,
        before: (usize, usize),
        detail: impl Into<String>,
    ) {
        let entry = ProvenanceEntry {
            operation: operation.to_string(),
            encounters_before: before.0,
            encounters_after: self.n_encounters(),
            rows_before: before.1,
            rows_after: self.n_rows(),
            detail: detail.into(),
        };
        self.provenance.push(entry);
    }

    pub fn counts(&self) -> (usize, usize) {
        (self.n_encounters(), self.n_rows())
    }

    /// Keeps encounters satisfying `keep`, preserving order.
    pub fn retain(&mut self, keep: impl FnMut(&EncounterSeries<T>) -> bool) {
        self.encounters.retain(keep);
    }

    /// Same schema and provenance, different encounter subset.
    pub fn with_encounters(&self, encounters: Vec<EncounterSeries<T>>) -> Self {
        Self {
            schema: self.schema.clone(),
            encounters,
            provenance: self.provenance.clone(),
        }
    }

    /// Appends a column to the schema and fills it per encounter.
    pub fn add_column(
        &mut self,
        spec: ColumnSpec<T>,
        mut fill: impl FnMut(&EncounterSeries<T>) -> Vec<T>,
    ) -> Result<usize, SchemaError> {
        let idx = self.schema.push(spec)?;
        for e in &mut self.encounters {
            let mut v = fill(e);
            v.resize(e.n_rows(), T::missing());
            e.push_column(v);
        }
        Ok(idx)
    }

    /// Restricts schema and data to the named columns (structural columns are
    /// always kept).
    pub fn select_columns(&self, names: &[String]) -> Result<Self, SchemaError> {
        let mut keep: Vec<usize> = Vec::new();
        for (i, c) in self.schema.columns().iter().enumerate() {
            if !c.role.is_value() || names.contains(&c.name) {
                keep.push(i);
            }
        }
        for n in names {
            self.schema.require(n)?;
        }
        let schema = FeatureSchema::new(keep.iter().map(|&i| self.schema.column(i).clone()).collect())?;
        let encounters = self
            .encounters
            .iter()
            .map(|e| {
                let mut e = e.clone();
                e.take_columns(&keep);
                e
            })
            .collect();
        Ok(Self {
            schema,
            encounters,
            provenance: self.provenance.clone(),
        })
    }

    /// SHA-256 over labels and value columns, independent of provenance.
    pub fn data_digest(&self) -> String {
        let mut h = Sha256::new();
        for c in self.schema.columns() {
            h.update(c.name.as_bytes());
            h.update([0u8]);
        }
        for e in &self.encounters {
            h.update(e.encounter_id.to_le_bytes());
            h.update((e.n_rows() as u64).to_le_bytes());
            h.update(&e.labels);
            for col in &e.columns {
                for v in col {
                    h.update(v.as_f64().to_bits().to_le_bytes());
                }
            }
        }
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    NonMonotoneLabel,
    InvalidLabel,
    OutOfPhysiologicRange,
    DuplicateEncounterId,
    ColumnLength,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ViolationKind::NonMonotoneLabel => "non-monotone label",
            ViolationKind::InvalidLabel => "label not in {0,1}",
            ViolationKind::OutOfPhysiologicRange => "out of physiologic range",
            ViolationKind::DuplicateEncounterId => "duplicate encounter id",
            ViolationKind::ColumnLength => "column length differs from row count",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub encounter_id: EncounterId,
    pub column: Option<String>,
    pub hour: Option<usize>,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "encounter {}", self.encounter_id)?;
        if let Some(c) = &self.column {
            write!(f, ", column {c}")?;
        }
        if let Some(h) = self.hour {
            write!(f, ", hour {h}")?;
        }
        write!(f, ": {}", self.kind)
    }
}

fn validate_encounter<T: Scalar>(schema: &FeatureSchema<T>, e: &EncounterSeries<T>) -> Vec<Violation> {
    let mut out = Vec::new();
    let label_name = schema.column(schema.label_column()).name.clone();
    if let Some(t) = e.labels.iter().position(|&l| l > 1) {
        out.push(Violation {
            encounter_id: e.encounter_id,
            column: Some(label_name.clone()),
            hour: Some(t),
            kind: ViolationKind::InvalidLabel,
        });
    }
    if let Err(ModelError::NonMonotoneLabels { hour, .. }) = e.onset_hour() {
        out.push(Violation {
            encounter_id: e.encounter_id,
            column: Some(label_name),
            hour: Some(hour),
            kind: ViolationKind::NonMonotoneLabel,
        });
    }
    for (c, spec) in schema.columns().iter().enumerate() {
        let col = e.columns.get(c).map(Vec::as_slice).unwrap_or(&[]);
        let expected = if spec.role.is_value() { e.n_rows() } else { 0 };
        if col.len() != expected {
            out.push(Violation {
                encounter_id: e.encounter_id,
                column: Some(spec.name.clone()),
                hour: None,
                kind: ViolationKind::ColumnLength,
            });
            continue;
        }
        if let Some(range) = spec.range {
            for (t, v) in col.iter().enumerate() {
                if let Some(v) = v.observed() {
                    if !range.contains(v) {
                        out.push(Violation {
                            encounter_id: e.encounter_id,
                            column: Some(spec.name.clone()),
                            hour: Some(t),
                            kind: ViolationKind::OutOfPhysiologicRange,
                        });
                    }
                }
            }
        }
    }
    out
}

/// Checks every type invariant; an empty list means the cohort is valid.
pub fn validate_cohort<T: Scalar>(cohort: &CohortFrame<T>) -> Vec<Violation> {
    use rayon::prelude::*;
    let schema = cohort.schema();
    let mut out: Vec<Violation> = cohort
        .encounters()
        .par_iter()
        .map(|e| validate_encounter(schema, e))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    let mut seen = std::collections::HashSet::new();
    for e in cohort.encounters() {
        if !seen.insert(e.encounter_id) {
            out.push(Violation {
                encounter_id: e.encounter_id,
                column: None,
                hour: None,
                kind: ViolationKind::DuplicateEncounterId,
            });
        }
    }
    out
}

/// Schema with a single vital (`heart_rate`, range `[20, 300]`) for tests.
#[cfg(test)]
pub(crate) fn tiny_schema() -> FeatureSchema<f64> {
    use crate::schema::Role;
    FeatureSchema::new(vec![
        ColumnSpec::new("encounter_id", Role::Id),
        ColumnSpec::new("hour", Role::Time),
        ColumnSpec::new("age", Role::Demographic).with_unit("years"),
        ColumnSpec::new("heart_rate", Role::Vital)
            .with_unit("bpm")
            .with_range(20.0, 300.0),
        ColumnSpec::new("sepsis_label", Role::Label),
    ])
    .unwrap()
}

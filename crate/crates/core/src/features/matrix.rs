//! Final feature-matrix assembly.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bands::BandTables;
use super::clinical::{clinical_columns, ComponentResolver, CLINICAL_COLUMNS};
use super::labels::shift_labels;
use super::window::{window_statistic, Statistic, WindowSpec};
use super::FeatureError;
use crate::frame::FeatureFrame;
use crate::model::{CohortFrame, EncounterId};
use crate::preprocess::mask_name;
use crate::scalar::Scalar;
use crate::schema::Role;

/// Which base features and which statistical columns enter the matrix.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSelections {
    pub original: Vec<String>,
    pub statistical: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixBlocks {
    pub original: Vec<String>,
    pub masks: Vec<String>,
    pub statistical: Vec<String>,
    pub clinical: Vec<String>,
    pub demographic: Vec<String>,
}

impl MatrixBlocks {
    /// Column order of the assembled matrix.
    pub fn ordered(&self) -> Vec<String> {
        [&self.original, &self.masks, &self.statistical, &self.clinical, &self.demographic]
            .into_iter()
            .flatten()
            .cloned()
            .collect()
    }

    /// Everything except the statistical block.
    pub fn non_statistical(&self) -> Vec<String> {
        [&self.original, &self.masks, &self.clinical, &self.demographic]
            .into_iter()
            .flatten()
            .cloned()
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bookkeeping {
    pub original: usize,
    pub masks: usize,
    pub statistical_candidates: usize,
    pub statistical_selected: usize,
    pub clinical: usize,
    pub demographic: usize,
    pub total: usize,
    pub identity: String,
}

impl Bookkeeping {
    fn from_blocks(b: &MatrixBlocks, candidates: usize) -> Self {
        let total = b.original.len() + b.masks.len() + b.statistical.len() + b.clinical.len() + b.demographic.len();
        Self {
            original: b.original.len(),
            masks: b.masks.len(),
            statistical_candidates: candidates,
            statistical_selected: b.statistical.len(),
            clinical: b.clinical.len(),
            demographic: b.demographic.len(),
            total,
            identity: format!(
                "{} + {} + {} + {} + {} = {}",
                b.original.len(),
                b.masks.len(),
                b.statistical.len(),
                b.clinical.len(),
                b.demographic.len(),
                total
            ),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FeatureMatrix<T> {
    pub frame: FeatureFrame<T>,
    pub encounter_ids: Vec<EncounterId>,
    pub hours: Vec<usize>,
    /// Labels as recorded; evaluation uses these.
    pub labels: Vec<u8>,
    /// Training targets after the early-warning shift.
    pub shifted_labels: Vec<u8>,
    pub blocks: MatrixBlocks,
}

impl<T: Scalar> FeatureMatrix<T> {
    pub fn n_rows(&self) -> usize {
        self.frame.n_rows()
    }

    /// Contiguous row range of each encounter, in row order.
    pub fn encounter_ranges(&self) -> Vec<(EncounterId, Range<usize>)> {
        let mut out: Vec<(EncounterId, Range<usize>)> = Vec::new();
        for (r, &id) in self.encounter_ids.iter().enumerate() {
            match out.last_mut() {
                Some((last, range)) if *last == id => range.end = r + 1,
                _ => out.push((id, r..r + 1)),
            }
        }
        out
    }

    /// Keeps the given rows, in order.
    pub fn take_rows(&self, rows: &[usize]) -> Self {
        Self {
            frame: self.frame.take_rows(rows),
            encounter_ids: rows.iter().map(|&r| self.encounter_ids[r]).collect(),
            hours: rows.iter().map(|&r| self.hours[r]).collect(),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            shifted_labels: rows.iter().map(|&r| self.shifted_labels[r]).collect(),
            blocks: self.blocks.clone(),
        }
    }

    /// Keeps the rows of the listed encounters.
    pub fn take_encounters(&self, keep: impl Fn(EncounterId) -> bool) -> Self {
        let rows: Vec<usize> = (0..self.n_rows()).filter(|&r| keep(self.encounter_ids[r])).collect();
        self.take_rows(&rows)
    }

    /// Narrows the statistical block to `keep` (order preserved from the
    /// current block).
    pub fn with_statistical(&self, keep: &[String]) -> Result<Self, FeatureError> {
        for k in keep {
            if !self.blocks.statistical.contains(k) {
                return Err(FeatureError::UnknownColumn(k.clone()));
            }
        }
        let mut blocks = self.blocks.clone();
        blocks.statistical.retain(|s| keep.contains(s));
        let frame = self.frame.select(&blocks.ordered())?;
        Ok(Self {
            frame,
            blocks,
            ..self.clone()
        })
    }

    pub fn bookkeeping(&self, statistical_candidates: usize) -> Bookkeeping {
        Bookkeeping::from_blocks(&self.blocks, statistical_candidates)
    }
}

fn pooled<T: Scalar>(cohort: &CohortFrame<T>, f: impl Fn(&crate::model::EncounterSeries<T>) -> Vec<T> + Sync + Send) -> Vec<T> {
    cohort.encounters().par_iter().map(f).collect::<Vec<_>>().concat()
}

/// Concatenates, in order: original features, their masks, the selected
/// statistical columns, the seven clinical columns and the schema's
/// demographic columns. The cohort must already carry mask columns and be
/// imputed.
pub fn assemble_feature_matrix<T: Scalar>(
    cohort: &CohortFrame<T>,
    selections: &FeatureSelections,
    spec: &WindowSpec,
    horizon: i64,
) -> Result<(FeatureMatrix<T>, Bookkeeping), FeatureError> {
    assemble_with_tables(cohort, selections, spec, horizon, BandTables::builtin())
}

pub fn assemble_with_tables<T: Scalar>(
    cohort: &CohortFrame<T>,
    selections: &FeatureSelections,
    spec: &WindowSpec,
    horizon: i64,
    tables: &BandTables,
) -> Result<(FeatureMatrix<T>, Bookkeeping), FeatureError> {
    spec.validate()?;
    let schema = cohort.schema();
    let n = cohort.n_rows();
    let mut frame = FeatureFrame::new(n);
    let mut blocks = MatrixBlocks::default();

    for f in &selections.original {
        let c = schema.require(f)?;
        frame.push_column(f.clone(), pooled(cohort, |e| e.column(c).to_vec()))?;
        blocks.original.push(f.clone());
    }
    for f in &selections.original {
        let name = mask_name(f);
        let c = schema.require(&name)?;
        let col = pooled(cohort, |e| e.column(c).to_vec());
        if col.iter().any(|v| v.is_missing()) {
            return Err(FeatureError::Shape(format!("mask column `{name}` has missing entries")));
        }
        frame.push_column(name.clone(), col)?;
        blocks.masks.push(name);
    }
    for s in &selections.statistical {
        let (stat, feature) =
            Statistic::parse_column(s).ok_or_else(|| FeatureError::UnknownStatistic(s.clone()))?;
        let c = schema.require(feature)?;
        let col = pooled(cohort, |e| window_statistic(e.column(c), stat, spec.window_hours));
        frame.push_column(s.clone(), col)?;
        blocks.statistical.push(s.clone());
    }
    let resolver = ComponentResolver::new(schema);
    let per_encounter: Vec<Vec<Vec<T>>> = cohort
        .encounters()
        .par_iter()
        .map(|e| clinical_columns(&resolver, tables, e))
        .collect();
    for (k, name) in CLINICAL_COLUMNS.iter().enumerate() {
        let col: Vec<T> = per_encounter.iter().flat_map(|cols| cols[k].iter().copied()).collect();
        frame.push_column(*name, col)?;
        blocks.clinical.push(name.to_string());
    }
    for name in schema.names_with_role(Role::Demographic) {
        let c = schema.require(&name)?;
        frame.push_column(name.clone(), pooled(cohort, |e| e.column(c).to_vec()))?;
        blocks.demographic.push(name);
    }

    let mut encounter_ids = Vec::with_capacity(n);
    let mut hours = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut shifted_labels = Vec::with_capacity(n);
    for e in cohort.encounters() {
        encounter_ids.extend(std::iter::repeat_n(e.encounter_id, e.n_rows()));
        hours.extend(0..e.n_rows());
        labels.extend_from_slice(e.labels());
        shifted_labels.extend(shift_labels(e.encounter_id, e.labels(), horizon)?);
    }
    let matrix = FeatureMatrix {
        frame,
        encounter_ids,
        hours,
        labels,
        shifted_labels,
        blocks,
    };
    let book = matrix.bookkeeping(spec.statistics.len() * selections.original.len());
    Ok((matrix, book))
}

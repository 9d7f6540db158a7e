//! Deterministic synthetic cohorts with planted pre-onset drift.
//!
//! Every encounter draws from its own stream keyed by `(seed, encounter_id)`,
//! so output does not depend on thread scheduling. Reference means and
//! spreads come from the schema's `normal` profiles.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::{Duration, NaiveDate};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CohortFrame, EncounterSeries, ProvenanceEntry};
use crate::rng::{stream, sub_seed};
use crate::scalar::Scalar;
use crate::schema::{base_name, FeatureSchema, Role};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    InvalidConfig(String),
    #[error("infeasible synth config: {0}")]
    Infeasible(String),
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LosConfig {
    pub median_hours: f64,
    /// Log-scale standard deviation.
    pub sigma: f64,
    pub min_hours: usize,
    pub max_hours: usize,
}

impl Default for LosConfig {
    fn default() -> Self {
        Self {
            median_hours: 22.0,
            sigma: 0.8,
            min_hours: 5,
            max_hours: 700,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MissingnessRates {
    pub vital: f64,
    pub lab: f64,
}

impl Default for MissingnessRates {
    fn default() -> Self {
        Self { vital: 0.2, lab: 0.9 }
    }
}

impl MissingnessRates {
    fn rate(&self, role: Role) -> Option<f64> {
        match role {
            Role::Vital => Some(self.vital),
            Role::Lab => Some(self.lab),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftConfig {
    pub lead_hours: usize,
    /// Full additive shift reached at onset, per base measurement name.
    pub magnitudes: BTreeMap<String, f64>,
}

impl Default for DriftConfig {
    fn default() -> Self {
        let magnitudes = [("heart_rate", 30.0), ("sbp", -30.0), ("temperature", 1.2), ("wbc", 5.0)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        Self { lead_hours: 12, magnitudes }
    }
}

/// `target = scale * source + offset + noise`, applied to latent paths
/// before drift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coupling {
    pub target: String,
    pub source: String,
    pub scale: f64,
    pub offset: f64,
    pub noise_sd: f64,
}

fn default_couplings() -> Vec<Coupling> {
    vec![
        Coupling {
            target: "hemoglobin".into(),
            source: "hct".into(),
            scale: 1.0 / 3.0,
            offset: 0.0,
            noise_sd: 0.3,
        },
        Coupling {
            target: "sao2".into(),
            source: "spo2".into(),
            scale: 1.0,
            offset: -1.0,
            noise_sd: 0.4,
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_encounters: usize,
    pub prevalence: f64,
    pub los: LosConfig,
    pub missingness: MissingnessRates,
    pub drift: DriftConfig,
    /// Share of encounters cut to a single row.
    pub one_hour_fraction: f64,
    /// First-order autoregressive coefficient of the hourly paths.
    pub ar_coefficient: f64,
    pub couplings: Vec<Coupling>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_encounters: 1000,
            prevalence: 0.0579,
            los: LosConfig::default(),
            missingness: MissingnessRates::default(),
            drift: DriftConfig::default(),
            one_hour_fraction: 0.0,
            ar_coefficient: 0.8,
            couplings: default_couplings(),
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(SynthError::InvalidConfig(format!("{name} = {v} is outside [0, 1]")))
            }
        };
        unit("prevalence", self.prevalence)?;
        unit("missingness.vital", self.missingness.vital)?;
        unit("missingness.lab", self.missingness.lab)?;
        unit("one_hour_fraction", self.one_hour_fraction)?;
        if self.drift.lead_hours < 1 {
            return Err(SynthError::InvalidConfig("drift.lead_hours must be at least 1".into()));
        }
        if !(self.ar_coefficient > -1.0 && self.ar_coefficient < 1.0) {
            return Err(SynthError::InvalidConfig("ar_coefficient must lie in (-1, 1)".into()));
        }
        let l = &self.los;
        if !(l.median_hours > 0.0 && l.sigma >= 0.0) || l.min_hours < 1 || l.min_hours > l.max_hours {
            return Err(SynthError::InvalidConfig(format!("los {l:?}")));
        }
        if self.prevalence > 0.0 && self.one_hour_fraction < 1.0 && self.drift.lead_hours + 1 > l.max_hours {
            return Err(SynthError::Infeasible(format!(
                "onset lead of {} h cannot fit in stays of at most {} h",
                self.drift.lead_hours, l.max_hours
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub encounter_id: u64,
    pub septic: bool,
    pub onset_hour: Option<usize>,
}

const MAX_DRAWS: usize = 10_000;

fn draw_los(rng: &mut ChaCha8Rng, l: &LosConfig, at_least: usize) -> Option<usize> {
    let lo = l.min_hours.max(at_least);
    for _ in 0..MAX_DRAWS {
        let z: f64 = rng.sample(StandardNormal);
        let h = (l.median_hours.ln() + l.sigma * z).exp().round();
        if h >= lo as f64 && h <= l.max_hours as f64 {
            return Some(h as usize);
        }
    }
    None
}

struct Group {
    base: String,
    columns: Vec<usize>,
    mean: f64,
    sd: f64,
}

fn measurement_groups<T: Scalar>(schema: &FeatureSchema<T>) -> Vec<Group> {
    let mut groups: Vec<Group> = Vec::new();
    for (c, spec) in schema.columns().iter().enumerate() {
        if !spec.role.is_measurement() {
            continue;
        }
        let Some(normal) = &spec.normal else { continue };
        let base = base_name(&spec.name).to_string();
        match groups.iter_mut().find(|g| g.base == base) {
            Some(g) => g.columns.push(c),
            None => groups.push(Group {
                base,
                columns: vec![c],
                mean: normal.mean,
                sd: normal.sd,
            }),
        }
    }
    groups
}

fn ar_path(rng: &mut ChaCha8Rng, n: usize, phi: f64) -> Vec<f64> {
    let innovation = (1.0 - phi * phi).sqrt();
    let mut z: f64 = rng.sample(StandardNormal);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(z);
        let e: f64 = rng.sample(StandardNormal);
        z = phi * z + innovation * e;
    }
    out
}

fn admission_of(id: u64) -> chrono::NaiveDateTime {
    NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date").and_hms_opt(0, 0, 0).expect("valid time")
        + Duration::hours(id as i64 * 7)
}

fn encounter<T: Scalar>(
    schema: &FeatureSchema<T>,
    groups: &[Group],
    config: &SynthConfig,
    id: u64,
) -> Result<(EncounterSeries<T>, GroundTruth), SynthError> {
    let mut rng = stream(config.seed, "synth", id);
    let septic = rng.random::<f64>() < config.prevalence;
    let one_hour = rng.random::<f64>() < config.one_hour_fraction;
    let lead = config.drift.lead_hours;
    let (n, onset) = if one_hour {
        // Single-row septic encounters present already septic.
        (1, septic.then_some(0))
    } else if septic {
        let n = draw_los(&mut rng, &config.los, lead + 1).ok_or_else(|| {
            SynthError::Infeasible(format!("no stay length of at least {} h could be drawn", lead + 1))
        })?;
        (n, Some(rng.random_range(lead..n)))
    } else {
        let n = draw_los(&mut rng, &config.los, 0)
            .ok_or_else(|| SynthError::Infeasible("stay-length distribution misses its truncation range".into()))?;
        (n, None)
    };

    let mut e = EncounterSeries::empty(schema, id, admission_of(id), n);
    e.discharge_time = Some(e.admission_time + Duration::hours(n as i64));
    if let Some(o) = onset {
        e.labels_mut()[o..].iter_mut().for_each(|y| *y = 1);
    }
    for c in schema.indices_with_role(Role::Demographic) {
        let spec = schema.column(c);
        let v = match (spec.name.as_str(), &spec.normal) {
            ("sex", _) => f64::from(u8::from(rng.random::<bool>())),
            ("age", Some(p)) => (p.mean + p.sd * rng.sample::<f64, _>(StandardNormal)).clamp(18.0, 100.0),
            (_, Some(p)) => p.mean + p.sd * rng.sample::<f64, _>(StandardNormal),
            (_, None) => continue,
        };
        let v = T::of(v);
        e.set(c, 0, Some(spec.range.as_ref().map_or(v, |r| r.clamp(v))));
    }

    // Standardized latent paths: a per-encounter offset plus AR(1) noise.
    let mut latent: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for g in groups {
        let offset: f64 = rng.sample(StandardNormal);
        let path = ar_path(&mut rng, n, config.ar_coefficient);
        latent.insert(
            g.base.as_str(),
            path.iter().map(|z| g.mean + g.sd * (0.6 * offset + 0.8 * z)).collect(),
        );
    }
    for cp in &config.couplings {
        let Some(src) = latent.get(cp.source.as_str()).cloned() else { continue };
        if let Some(dst) = latent.get_mut(cp.target.as_str()) {
            let noise = Normal::new(0.0, cp.noise_sd.max(0.0)).map_err(|e| SynthError::InvalidConfig(e.to_string()))?;
            for (d, s) in dst.iter_mut().zip(&src) {
                *d = cp.scale * s + cp.offset + noise.sample(&mut rng);
            }
        }
    }
    if let Some(o) = onset {
        for (base, &m) in &config.drift.magnitudes {
            if let Some(path) = latent.get_mut(base.as_str()) {
                for (t, v) in path.iter_mut().enumerate() {
                    let ramp = ((t as f64 - (o as f64 - lead as f64)) / lead as f64).clamp(0.0, 1.0);
                    *v += m * ramp;
                }
            }
        }
    }
    for g in groups {
        let path = &latent[g.base.as_str()];
        for &c in &g.columns {
            let spec = schema.column(c);
            let sign = if spec.name.starts_with("min_") {
                -1.0
            } else if spec.name.starts_with("max_") {
                1.0
            } else {
                0.0
            };
            for (t, &x) in path.iter().enumerate() {
                let jitter: f64 = rng.sample::<f64, _>(StandardNormal).abs() * 0.05 * g.sd;
                let v = T::of(x + sign * jitter);
                e.set(c, t, Some(spec.range.as_ref().map_or(v, |r| r.clamp(v))));
            }
        }
    }
    Ok((
        e,
        GroundTruth {
            encounter_id: id,
            septic: onset.is_some(),
            onset_hour: onset,
        },
    ))
}

/// Generates `n_encounters` encounters with ids `1..=n`, then applies
/// missingness. Deterministic in `config.seed`.
pub fn generate_cohort<T: Scalar>(
    schema: &FeatureSchema<T>,
    config: &SynthConfig,
) -> Result<(CohortFrame<T>, Vec<GroundTruth>), SynthError> {
    config.validate()?;
    let groups = measurement_groups(schema);
    let made: Vec<(EncounterSeries<T>, GroundTruth)> = (1..=config.n_encounters as u64)
        .into_par_iter()
        .map(|id| encounter(schema, &groups, config, id))
        .collect::<Result<_, _>>()?;
    let (encounters, truth): (Vec<_>, Vec<_>) = made.into_iter().unzip();
    let mut cohort = CohortFrame::from_encounters(schema.clone(), encounters);
    let (n_enc, n_rows) = cohort.counts();
    cohort.record(ProvenanceEntry {
        operation: "generate_cohort".into(),
        encounters_before: 0,
        encounters_after: n_enc,
        rows_before: 0,
        rows_after: n_rows,
        detail: format!("seed {}", config.seed),
    });
    let cohort = inject_missingness(&cohort, &config.missingness, sub_seed(config.seed, "missingness"));
    Ok((cohort, truth))
}

/// Masks each vital/lab cell independently at its role's rate.
pub fn inject_missingness<T: Scalar>(cohort: &CohortFrame<T>, rates: &MissingnessRates, seed: u64) -> CohortFrame<T> {
    let schema = cohort.schema();
    let targets: Vec<(usize, f64)> = (0..schema.len())
        .filter_map(|c| rates.rate(schema.column(c).role).map(|r| (c, r)))
        .collect();
    let encounters: Vec<EncounterSeries<T>> = cohort
        .encounters()
        .par_iter()
        .map(|e| {
            let mut e = e.clone();
            let mut rng = stream(seed, "missingness", e.encounter_id);
            for &(c, rate) in &targets {
                for v in e.column_mut(c) {
                    if rng.random::<f64>() < rate {
                        *v = T::missing();
                    }
                }
            }
            e
        })
        .collect();
    let before = cohort.counts();
    let mut out = cohort.with_encounters(encounters);
    out.record(ProvenanceEntry {
        operation: "inject_missingness".into(),
        encounters_before: before.0,
        encounters_after: before.0,
        rows_before: before.1,
        rows_after: before.1,
        detail: format!("vital {} lab {}", rates.vital, rates.lab),
    });
    out
}

#[derive(Serialize, Deserialize)]
struct TruthRecord {
    encounter_id: u64,
    septic: u8,
    onset_hour: Option<usize>,
}

/// Sidecar CSV: `encounter_id,septic,onset_hour` (empty onset when absent).
pub fn write_ground_truth<W: Write>(truth: &[GroundTruth], writer: W) -> Result<(), SynthError> {
    let mut w = csv::Writer::from_writer(writer);
    for g in truth {
        w.serialize(TruthRecord {
            encounter_id: g.encounter_id,
            septic: u8::from(g.septic),
            onset_hour: g.onset_hour,
        })
        .map_err(|e| SynthError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| SynthError::Io(e.to_string()))
}

pub fn read_ground_truth<R: Read>(reader: R) -> Result<Vec<GroundTruth>, SynthError> {
    csv::Reader::from_reader(reader)
        .deserialize::<TruthRecord>()
        .map(|r| {
            let r = r.map_err(|e| SynthError::Io(e.to_string()))?;
            Ok(GroundTruth {
                encounter_id: r.encounter_id,
                septic: r.septic == 1,
                onset_hour: r.onset_hour,
            })
        })
        .collect()
}

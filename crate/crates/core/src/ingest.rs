//! Readers and writers for the two tabular formats, plus event bucketing.
//!
//! Wide CSV: comma separated, header required, one row per (encounter, hour).
//! Column names are schema names plus two optional reserved columns,
//! `admission_time` and `discharge_time` (`YYYY-MM-DDTHH:MM:SS`). Empty
//! fields are missing values.
//!
//! PSV: one file per encounter, pipe separated, header required, one row per
//! hour, literal `NaN` for missing values, final column is the label.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDateTime;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{epoch, CohortFrame, EncounterId, EncounterSeries, ProvenanceEntry};
use crate::scalar::Scalar;
use crate::schema::FeatureSchema;

pub const ADMISSION_TIME: &str = "admission_time";
pub const DISCHARGE_TIME: &str = "discharge_time";
const TIME_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("unknown column `{0}` (not in schema)")]
    UnknownColumn(String),
    #[error("required column `{0}` missing from header")]
    MissingColumn(String),
    #[error("line {line}: cannot parse `{value}` in column `{column}`")]
    Parse {
        line: u64,
        column: String,
        value: String,
    },
    #[error("line {line}: row has {got} fields, header has {expected}")]
    Ragged { line: u64, expected: usize, got: usize },
    #[error("line {line}: duplicate row for encounter {encounter_id} hour {hour}")]
    DuplicateHour {
        line: u64,
        encounter_id: EncounterId,
        hour: usize,
    },
    #[error("empty encounter")]
    EmptyEncounter,
    #[error("events from encounter {found} passed with header for encounter {expected}")]
    MixedEncounters { expected: EncounterId, found: EncounterId },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

fn parse_time(line: u64, column: &str, s: &str) -> Result<Option<NaiveDateTime>, IngestError> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(None);
    }
    NaiveDateTime::parse_from_str(s, TIME_FORMAT)
        .map(Some)
        .map_err(|_| IngestError::Parse {
            line,
            column: column.to_string(),
            value: s.to_string(),
        })
}

pub fn format_time(t: &NaiveDateTime) -> String {
    t.format(TIME_FORMAT).to_string()
}

fn parse_value<T: Scalar>(line: u64, column: &str, s: &str) -> Result<Option<T>, IngestError> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(None);
    }
    T::parse_decimal(s)
        .map(|v| v.observed())
        .ok_or_else(|| IngestError::Parse {
            line,
            column: column.to_string(),
            value: s.to_string(),
        })
}

fn parse_int<N: std::str::FromStr>(line: u64, column: &str, s: &str) -> Result<N, IngestError> {
    s.trim().parse::<N>().map_err(|_| IngestError::Parse {
        line,
        column: column.to_string(),
        value: s.to_string(),
    })
}

fn parse_label(line: u64, column: &str, s: &str) -> Result<u8, IngestError> {
    let s = s.trim();
    // PhysioNet files sometimes write labels as floats.
    match s {
        "0" | "0.0" => Ok(0),
        "1" | "1.0" => Ok(1),
        _ => Err(IngestError::Parse {
            line,
            column: column.to_string(),
            value: s.to_string(),
        }),
    }
}

struct PendingRow<T> {
    hour: usize,
    line: u64,
    label: u8,
    values: Vec<(usize, T)>,
}

#[derive(Default)]
struct PendingEncounter<T> {
    admission: Option<NaiveDateTime>,
    discharge: Option<NaiveDateTime>,
    rows: Vec<PendingRow<T>>,
}

/// Reads a wide CSV into a cohort on the dense hourly grid.
///
/// Encounters come out ordered by id. Hours absent from the file become
/// all-missing rows whose label repeats the previous hour's label.
pub fn read_wide_csv<T: Scalar, R: Read>(
    reader: R,
    schema: &FeatureSchema<T>,
) -> Result<CohortFrame<T>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header = rdr.headers()?.clone();

    let mut slots: Vec<Option<usize>> = Vec::with_capacity(header.len());
    let (mut adm_col, mut dis_col) = (None, None);
    for (pos, name) in header.iter().enumerate() {
        let name = name.trim();
        match name {
            ADMISSION_TIME => {
                adm_col = Some(pos);
                slots.push(None);
            }
            DISCHARGE_TIME => {
                dis_col = Some(pos);
                slots.push(None);
            }
            _ => slots.push(Some(
                schema
                    .index_of(name)
                    .ok_or_else(|| IngestError::UnknownColumn(name.to_string()))?,
            )),
        }
    }
    let find = |c: usize| slots.iter().position(|s| *s == Some(c));
    let id_pos = find(schema.id_column())
        .ok_or_else(|| IngestError::MissingColumn(schema.column(schema.id_column()).name.clone()))?;
    let time_idx = schema
        .time_column()
        .ok_or_else(|| IngestError::MissingColumn("<time>".into()))?;
    let time_pos =
        find(time_idx).ok_or_else(|| IngestError::MissingColumn(schema.column(time_idx).name.clone()))?;
    let label_pos = find(schema.label_column()).ok_or_else(|| {
        IngestError::MissingColumn(schema.column(schema.label_column()).name.clone())
    })?;

    let mut pending: BTreeMap<EncounterId, PendingEncounter<T>> = BTreeMap::new();
    let mut source_lines = 0usize;
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != header.len() {
            return Err(IngestError::Ragged {
                line,
                expected: header.len(),
                got: rec.len(),
            });
        }
        source_lines += 1;
        let id: EncounterId = parse_int(line, &header[id_pos], &rec[id_pos])?;
        let hour: usize = parse_int(line, &header[time_pos], &rec[time_pos])?;
        let label = parse_label(line, &header[label_pos], &rec[label_pos])?;
        let mut values = Vec::new();
        for (pos, slot) in slots.iter().enumerate() {
            if let Some(c) = *slot {
                if schema.column(c).role.is_value() {
                    if let Some(v) = parse_value::<T>(line, &header[pos], &rec[pos])? {
                        values.push((c, v));
                    }
                }
            }
        }
        let enc = pending.entry(id).or_default();
        if let Some(p) = adm_col {
            if let Some(t) = parse_time(line, ADMISSION_TIME, &rec[p])? {
                enc.admission.get_or_insert(t);
            }
        }
        if let Some(p) = dis_col {
            if let Some(t) = parse_time(line, DISCHARGE_TIME, &rec[p])? {
                enc.discharge.get_or_insert(t);
            }
        }
        enc.rows.push(PendingRow {
            hour,
            line,
            label,
            values,
        });
    }

    let mut cohort = CohortFrame::new(schema.clone());
    for (id, mut enc) in pending {
        enc.rows.sort_by_key(|r| r.hour);
        for w in enc.rows.windows(2) {
            if w[0].hour == w[1].hour {
                return Err(IngestError::DuplicateHour {
                    line: w[1].line,
                    encounter_id: id,
                    hour: w[1].hour,
                });
            }
        }
        let n_rows = enc.rows.last().map(|r| r.hour + 1).unwrap_or(0);
        let mut series = EncounterSeries::empty(schema, id, enc.admission.unwrap_or_else(epoch), n_rows);
        series.discharge_time = enc.discharge;
        let mut rows = enc.rows.iter().peekable();
        let mut label = 0u8;
        for t in 0..n_rows {
            if let Some(r) = rows.next_if(|r| r.hour == t) {
                label = r.label;
                for &(c, v) in &r.values {
                    series.set(c, t, Some(v));
                }
            }
            series.labels_mut()[t] = label;
        }
        cohort.push(series);
    }
    let detail = format!("0 rejected, dense grid {} rows", cohort.n_rows());
    cohort.record(ProvenanceEntry {
        operation: "read_wide_csv".into(),
        encounters_before: 0,
        encounters_after: cohort.n_encounters(),
        rows_before: source_lines,
        rows_after: source_lines,
        detail,
    });
    Ok(cohort)
}

/// Writes the dense grid as wide CSV. Reading the output back yields the
/// same values bit for bit.
pub fn write_wide_csv<T: Scalar, W: Write>(cohort: &CohortFrame<T>, writer: W) -> Result<(), IngestError> {
    let schema = cohort.schema();
    let mut w = csv::WriterBuilder::new().from_writer(writer);
    let mut header: Vec<&str> = schema.columns().iter().map(|c| c.name.as_str()).collect();
    header.push(ADMISSION_TIME);
    header.push(DISCHARGE_TIME);
    w.write_record(&header)?;
    let id_col = schema.id_column();
    let time_col = schema.time_column();
    let label_col = schema.label_column();
    let mut fields: Vec<String> = Vec::with_capacity(header.len());
    for e in cohort.encounters() {
        let adm = format_time(&e.admission_time);
        let dis = e.discharge_time.as_ref().map(format_time).unwrap_or_default();
        for t in 0..e.n_rows() {
            fields.clear();
            for (c, spec) in schema.columns().iter().enumerate() {
                let f = if c == id_col {
                    e.encounter_id.to_string()
                } else if Some(c) == time_col {
                    t.to_string()
                } else if c == label_col {
                    e.labels()[t].to_string()
                } else if spec.role.is_value() {
                    e.value(c, t).map(|v| v.to_string()).unwrap_or_default()
                } else {
                    String::new()
                };
                fields.push(f);
            }
            fields.push(adm.clone());
            fields.push(dis.clone());
            w.write_record(&fields)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads one pipe-separated encounter file. Row ordinal is the hour index.
pub fn read_psv_encounter<T: Scalar, R: Read>(
    reader: R,
    schema: &FeatureSchema<T>,
    encounter_id: EncounterId,
) -> Result<EncounterSeries<T>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'|')
        .quoting(false)
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.is_empty() {
        return Err(IngestError::EmptyEncounter);
    }
    let label_pos = header.len() - 1;
    let mut slots = Vec::with_capacity(label_pos);
    for name in header.iter().take(label_pos) {
        let c = schema
            .index_of(name.trim())
            .ok_or_else(|| IngestError::UnknownColumn(name.trim().to_string()))?;
        slots.push(c);
    }
    let mut rows: Vec<(u8, Vec<(usize, T)>)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != header.len() {
            return Err(IngestError::Ragged {
                line,
                expected: header.len(),
                got: rec.len(),
            });
        }
        let label = parse_label(line, &header[label_pos], &rec[label_pos])?;
        let mut values = Vec::new();
        for (pos, &c) in slots.iter().enumerate() {
            let raw = rec[pos].trim();
            if raw == "NaN" || !schema.column(c).role.is_value() {
                continue;
            }
            if let Some(v) = parse_value::<T>(line, &header[pos], raw)? {
                values.push((c, v));
            }
        }
        rows.push((label, values));
    }
    if rows.is_empty() {
        return Err(IngestError::EmptyEncounter);
    }
    let mut series = EncounterSeries::empty(schema, encounter_id, epoch(), rows.len());
    for (t, (label, values)) in rows.into_iter().enumerate() {
        series.labels_mut()[t] = label;
        for (c, v) in values {
            series.set(c, t, Some(v));
        }
    }
    Ok(series)
}

/// Writes one encounter as PSV over the schema's value columns.
pub fn write_psv_encounter<T: Scalar, W: Write>(
    series: &EncounterSeries<T>,
    schema: &FeatureSchema<T>,
    mut writer: W,
) -> Result<(), IngestError> {
    let cols: Vec<usize> = (0..schema.len())
        .filter(|&c| schema.column(c).role.is_value())
        .collect();
    let mut header: Vec<&str> = cols.iter().map(|&c| schema.column(c).name.as_str()).collect();
    header.push(&schema.column(schema.label_column()).name);
    writeln!(writer, "{}", header.join("|"))?;
    for t in 0..series.n_rows() {
        let mut fields: Vec<String> = cols
            .iter()
            .map(|&c| series.value(c, t).map(|v| v.to_string()).unwrap_or_else(|| "NaN".into()))
            .collect();
        fields.push(series.labels()[t].to_string());
        writeln!(writer, "{}", fields.join("|"))?;
    }
    Ok(())
}

/// Parses every `*.psv` file in a directory, one encounter per file.
/// Encounter ids come from the digits in the file stem (`p000123.psv` is
/// encounter 123); output is ordered by id regardless of parse order.
pub fn read_psv_directory<T: Scalar>(
    dir: &Path,
    schema: &FeatureSchema<T>,
) -> Result<CohortFrame<T>, IngestError> {
    let mut files: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "psv"))
        .collect();
    files.sort();
    let parsed: Vec<Result<EncounterSeries<T>, IngestError>> = files
        .par_iter()
        .enumerate()
        .map(|(ordinal, path)| {
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
            let digits: String = stem.chars().filter(char::is_ascii_digit).collect();
            let id = digits.parse::<EncounterId>().unwrap_or(ordinal as EncounterId);
            let f = std::fs::File::open(path)?;
            read_psv_encounter(std::io::BufReader::new(f), schema, id)
        })
        .collect();
    let mut encounters = parsed.into_iter().collect::<Result<Vec<_>, _>>()?;
    encounters.sort_by_key(|e| e.encounter_id);
    let lines = encounters.iter().map(|e| e.n_rows()).sum::<usize>();
    let mut cohort = CohortFrame::from_encounters(schema.clone(), encounters);
    cohort.record(ProvenanceEntry {
        operation: "read_psv_directory".into(),
        encounters_before: 0,
        encounters_after: cohort.n_encounters(),
        rows_before: lines,
        rows_after: lines,
        detail: format!("{} files", files.len()),
    });
    Ok(cohort)
}

/// A single timestamped reading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawEvent<T> {
    pub encounter_id: EncounterId,
    pub timestamp: NaiveDateTime,
    pub column: String,
    pub value: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncounterHeader {
    pub encounter_id: EncounterId,
    pub admission_time: NaiveDateTime,
    pub discharge_time: Option<NaiveDateTime>,
    /// Labels are 1 from the hour containing this instant.
    pub onset_time: Option<NaiveDateTime>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedEvent {
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketAudit {
    pub accepted: usize,
    pub rejected: Vec<RejectedEvent>,
}

fn hour_bucket(admission: &NaiveDateTime, t: &NaiveDateTime) -> Option<usize> {
    let secs = (*t - *admission).num_seconds();
    (secs >= 0).then_some((secs / 3600) as usize)
}

/// Aggregates raw readings into hourly `min_`/`max_` cells.
///
/// Hour `h` covers `[admission + h, admission + h + 1)`. A reading for base
/// column `x` updates `min_x` and `max_x`; a reading for a column present in
/// the schema under its own name keeps the latest value in the hour.
pub fn bucket_to_hourly<T: Scalar>(
    events: &[RawEvent<T>],
    schema: &FeatureSchema<T>,
    header: &EncounterHeader,
) -> Result<(EncounterSeries<T>, BucketAudit), IngestError> {
    let mut audit = BucketAudit::default();
    let mut order: Vec<usize> = (0..events.len()).collect();
    order.sort_by_key(|&i| events[i].timestamp);

    struct Cell {
        hour: usize,
        targets: Targets,
        value: f64,
    }
    enum Targets {
        MinMax(Option<usize>, Option<usize>),
        Last(usize),
    }
    let mut cells = Vec::new();
    for &i in &order {
        let ev = &events[i];
        if ev.encounter_id != header.encounter_id {
            return Err(IngestError::MixedEncounters {
                expected: header.encounter_id,
                found: ev.encounter_id,
            });
        }
        let Some(hour) = hour_bucket(&header.admission_time, &ev.timestamp) else {
            audit.rejected.push(RejectedEvent {
                index: i,
                reason: "event before admission".into(),
            });
            continue;
        };
        if ev.value.is_missing() {
            audit.rejected.push(RejectedEvent {
                index: i,
                reason: "missing value".into(),
            });
            continue;
        }
        let lo = schema.index_of(&format!("min_{}", ev.column));
        let hi = schema.index_of(&format!("max_{}", ev.column));
        let targets = if lo.is_some() || hi.is_some() {
            Targets::MinMax(lo, hi)
        } else if let Some(c) = schema.index_of(&ev.column).filter(|&c| schema.column(c).role.is_value()) {
            Targets::Last(c)
        } else {
            audit.rejected.push(RejectedEvent {
                index: i,
                reason: format!("unknown column `{}`", ev.column),
            });
            continue;
        };
        audit.accepted += 1;
        cells.push(Cell {
            hour,
            targets,
            value: ev.value.as_f64(),
        });
    }

    let onset = header
        .onset_time
        .as_ref()
        .and_then(|t| hour_bucket(&header.admission_time, t));
    let n_rows = cells
        .iter()
        .map(|c| c.hour + 1)
        .chain(onset.map(|o| o + 1))
        .max()
        .unwrap_or(0);
    let mut series = EncounterSeries::empty(schema, header.encounter_id, header.admission_time, n_rows);
    series.discharge_time = header.discharge_time;
    for cell in cells {
        let v = T::of(cell.value);
        match cell.targets {
            Targets::MinMax(lo, hi) => {
                if let Some(c) = lo {
                    let cur = series.value(c, cell.hour);
                    series.set(c, cell.hour, Some(cur.map_or(v, |x| x.min(v))));
                }
                if let Some(c) = hi {
                    let cur = series.value(c, cell.hour);
                    series.set(c, cell.hour, Some(cur.map_or(v, |x| x.max(v))));
                }
            }
            Targets::Last(c) => series.set(c, cell.hour, Some(v)),
        }
    }
    if let Some(o) = onset {
        for l in &mut series.labels_mut()[o..] {
            *l = 1;
        }
    }
    Ok((series, audit))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tiny_schema;
    use crate::schema::Role;
    use chrono::Duration;

    const CSV: &str = "encounter_id,hour,age,heart_rate,sepsis_label\n\
                       7,0,64,88,0\n\
                       7,2,,91.5,1\n";

    #[test]
    fn wide_csv_materializes_dense_grid() {
        let schema = tiny_schema();
        let cohort = read_wide_csv(CSV.as_bytes(), &schema).unwrap();
        assert_eq!(cohort.n_encounters(), 1);
        let e = &cohort.encounters()[0];
        assert_eq!(e.n_rows(), 3);
        let hr = schema.index_of("heart_rate").unwrap();
        assert_eq!(e.value(hr, 0), Some(88.0));
        assert_eq!(e.value(hr, 1), None);
        assert_eq!(e.value(hr, 2), Some(91.5));
        assert_eq!(e.labels(), &[0, 0, 1]);
        let p = &cohort.provenance()[0];
        assert_eq!((p.rows_before, p.rows_after), (2, 2));
    }

    #[test]
    fn header_only_is_empty_cohort() {
        let schema = tiny_schema();
        let cohort = read_wide_csv("encounter_id,hour,age,heart_rate,sepsis_label\n".as_bytes(), &schema).unwrap();
        assert_eq!(cohort.n_encounters(), 0);
    }

    #[test]
    fn non_numeric_value_cites_line() {
        let schema = tiny_schema();
        let text = "encounter_id,hour,age,heart_rate,sepsis_label\n1,0,50,80,0\n1,1,50,abc,0\n";
        match read_wide_csv(text.as_bytes(), &schema) {
            Err(IngestError::Parse { line, column, value }) => {
                assert_eq!(line, 3);
                assert_eq!(column, "heart_rate");
                assert_eq!(value, "abc");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_column_is_named() {
        let schema = tiny_schema();
        let text = "encounter_id,hour,lactate,sepsis_label\n";
        match read_wide_csv(text.as_bytes(), &schema) {
            Err(IngestError::UnknownColumn(c)) => assert_eq!(c, "lactate"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicate_hour_rejected() {
        let schema = tiny_schema();
        let text = "encounter_id,hour,age,heart_rate,sepsis_label\n1,0,,80,0\n1,0,,81,0\n";
        assert!(matches!(
            read_wide_csv(text.as_bytes(), &schema),
            Err(IngestError::DuplicateHour { hour: 0, .. })
        ));
    }

    #[test]
    fn wide_csv_round_trip_is_bit_exact() {
        let schema = tiny_schema();
        let mut cohort = read_wide_csv(CSV.as_bytes(), &schema).unwrap();
        let hr = schema.index_of("heart_rate").unwrap();
        cohort.encounters_mut()[0].set(hr, 1, Some(0.1 + 0.2));
        cohort.encounters_mut()[0].discharge_time = Some(epoch() + Duration::hours(5));
        let mut buf = Vec::new();
        write_wide_csv(&cohort, &mut buf).unwrap();
        let back = read_wide_csv(buf.as_slice(), &schema).unwrap();
        assert_eq!(back.encounters(), cohort.encounters());
        assert_eq!(back.data_digest(), cohort.data_digest());
    }

    const PSV: &str = "heart_rate|age|sepsis_label\n80|NaN|0\nNaN|NaN|0\n101|70|1\n";

    #[test]
    fn psv_maps_rows_and_labels() {
        let schema = tiny_schema();
        let e = read_psv_encounter(PSV.as_bytes(), &schema, 3).unwrap();
        assert_eq!(e.n_rows(), 3);
        assert_eq!(e.onset_hour(), Ok(Some(2)));
        let row = e.row(1);
        assert!(row.values.iter().all(Option::is_none));
    }

    #[test]
    fn psv_errors() {
        let schema = tiny_schema();
        assert!(matches!(
            read_psv_encounter("heart_rate|sepsis_label\n".as_bytes(), &schema, 1),
            Err(IngestError::EmptyEncounter)
        ));
        let ragged = "heart_rate|age|sepsis_label\n80|NaN|0\n80|0\n";
        assert!(matches!(
            read_psv_encounter(ragged.as_bytes(), &schema, 1),
            Err(IngestError::Ragged { line: 3, expected: 3, got: 2 })
        ));
    }

    #[test]
    fn psv_round_trip() {
        let schema = tiny_schema();
        let e = read_psv_encounter(PSV.as_bytes(), &schema, 3).unwrap();
        let mut buf = Vec::new();
        write_psv_encounter(&e, &schema, &mut buf).unwrap();
        let back = read_psv_encounter(buf.as_slice(), &schema, 3).unwrap();
        assert_eq!(back, e);
    }

    fn minmax_schema() -> FeatureSchema<f64> {
        use crate::schema::ColumnSpec;
        FeatureSchema::new(vec![
            ColumnSpec::new("encounter_id", Role::Id),
            ColumnSpec::new("hour", Role::Time),
            ColumnSpec::new("min_heart_rate", Role::Vital).with_unit("bpm"),
            ColumnSpec::new("max_heart_rate", Role::Vital).with_unit("bpm"),
            ColumnSpec::new("sepsis_label", Role::Label),
        ])
        .unwrap()
    }

    fn ev(minutes: i64, v: f64) -> RawEvent<f64> {
        RawEvent {
            encounter_id: 1,
            timestamp: epoch() + Duration::minutes(minutes),
            column: "heart_rate".into(),
            value: v,
        }
    }

    #[test]
    fn bucketing_min_max() {
        let schema = minmax_schema();
        let header = EncounterHeader {
            encounter_id: 1,
            admission_time: epoch(),
            discharge_time: None,
            onset_time: None,
        };
        let events = vec![ev(5 * 60 + 10, 96.0), ev(5 * 60 + 40, 80.0), ev(2 * 60, 70.0), ev(-5, 60.0)];
        let (s, audit) = bucket_to_hourly(&events, &schema, &header).unwrap();
        let (lo, hi) = (2, 3);
        assert_eq!(s.n_rows(), 6);
        assert_eq!((s.value(lo, 5), s.value(hi, 5)), (Some(80.0), Some(96.0)));
        assert_eq!((s.value(lo, 2), s.value(hi, 2)), (Some(70.0), Some(70.0)));
        assert_eq!((s.value(lo, 3), s.value(hi, 3)), (None, None));
        assert_eq!(audit.accepted, 3);
        assert_eq!(audit.rejected.len(), 1);
        assert_eq!(audit.rejected[0].index, 3);
    }

    #[test]
    fn bucket_edges_are_half_open() {
        let schema = minmax_schema();
        let header = EncounterHeader {
            encounter_id: 1,
            admission_time: epoch(),
            discharge_time: None,
            onset_time: Some(epoch() + Duration::minutes(60)),
        };
        let (s, _) = bucket_to_hourly(&[ev(60, 77.0)], &schema, &header).unwrap();
        assert_eq!(s.value(2, 0), None);
        assert_eq!(s.value(2, 1), Some(77.0));
        assert_eq!(s.labels(), &[0, 1]);
    }
}

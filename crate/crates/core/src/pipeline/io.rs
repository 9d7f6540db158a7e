//! CSV forms of feature matrices and predictions. Floats are written in
//! shortest round-trip form; missing values are empty fields.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::routing::Route;
use super::PipelineError;
use crate::features::{FeatureMatrix, MatrixBlocks};
use crate::frame::FeatureFrame;
use crate::Matrix;

const KEYS: [&str; 4] = ["encounter_id", "hour", "label", "shifted_label"];

fn cell(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

fn io_err(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::stage("io", e)
}

pub fn write_matrix_csv<W: Write>(matrix: &Matrix, writer: W) -> Result<(), PipelineError> {
    let mut w = csv::Writer::from_writer(writer);
    let names = matrix.frame.names();
    w.write_record(KEYS.iter().copied().chain(names.iter().map(String::as_str)))
        .map_err(io_err)?;
    let cols = matrix.frame.columns();
    for r in 0..matrix.n_rows() {
        let mut rec = vec![
            matrix.encounter_ids[r].to_string(),
            matrix.hours[r].to_string(),
            matrix.labels[r].to_string(),
            matrix.shifted_labels[r].to_string(),
        ];
        rec.extend(cols.iter().map(|c| cell(c[r])));
        w.write_record(&rec).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Reads a matrix written by [`write_matrix_csv`]; `blocks` must name the
/// file's feature columns in order.
pub fn read_matrix_csv<R: Read>(reader: R, blocks: &MatrixBlocks) -> Result<Matrix, PipelineError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header: Vec<String> = rdr.headers().map_err(io_err)?.iter().map(str::to_string).collect();
    let expected: Vec<String> = KEYS.iter().map(|s| s.to_string()).chain(blocks.ordered()).collect();
    if header != expected {
        return Err(PipelineError::Validation(
            "matrix header does not match the frozen feature layout".into(),
        ));
    }
    let n_feat = header.len() - KEYS.len();
    let (mut ids, mut hours, mut labels, mut shifted) = (vec![], vec![], vec![], vec![]);
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); n_feat];
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(io_err)?;
        let bad = |what: &str| PipelineError::Validation(format!("matrix line {}: bad {what}", line + 2));
        ids.push(rec[0].parse().map_err(|_| bad("encounter_id"))?);
        hours.push(rec[1].parse().map_err(|_| bad("hour"))?);
        labels.push(rec[2].parse().map_err(|_| bad("label"))?);
        shifted.push(rec[3].parse().map_err(|_| bad("shifted_label"))?);
        for (k, col) in cols.iter_mut().enumerate() {
            let s = &rec[KEYS.len() + k];
            col.push(if s.is_empty() { f64::NAN } else { s.parse().map_err(|_| bad(&header[KEYS.len() + k]))? });
        }
    }
    let n = ids.len();
    let frame = FeatureFrame::from_columns(n, header[KEYS.len()..].iter().cloned().zip(cols).collect())
        .map_err(io_err)?;
    Ok(FeatureMatrix {
        frame,
        encounter_ids: ids,
        hours,
        labels,
        shifted_labels: shifted,
        blocks: blocks.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub encounter_id: u64,
    pub hour: usize,
    pub label: u8,
    pub probability: f64,
    pub route: Route,
}

pub fn write_predictions_csv<W: Write>(rows: &[PredictionRow], writer: W) -> Result<(), PipelineError> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn read_predictions_csv<R: Read>(reader: R) -> Result<Vec<PredictionRow>, PipelineError> {
    csv::Reader::from_reader(reader)
        .deserialize()
        .map(|r| r.map_err(|e| PipelineError::Validation(format!("predictions: {e}"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_round_trip_is_exact() {
        let frame = FeatureFrame::from_columns(
            3,
            vec![("a".into(), vec![0.1 + 0.2, f64::NAN, -1e-300]), ("mask_a".into(), vec![1.0, 0.0, 1.0])],
        )
        .unwrap();
        let blocks = MatrixBlocks {
            original: vec!["a".into()],
            masks: vec!["mask_a".into()],
            ..Default::default()
        };
        let m = FeatureMatrix {
            frame,
            encounter_ids: vec![7, 7, 8],
            hours: vec![0, 1, 0],
            labels: vec![0, 1, 0],
            shifted_labels: vec![1, 1, 0],
            blocks: blocks.clone(),
        };
        let mut buf = Vec::new();
        write_matrix_csv(&m, &mut buf).unwrap();
        let back = read_matrix_csv(buf.as_slice(), &blocks).unwrap();
        assert_eq!(back.frame, m.frame);
        assert_eq!(back.shifted_labels, m.shifted_labels);
        let wrong = MatrixBlocks { original: vec!["b".into()], ..blocks };
        assert!(read_matrix_csv(buf.as_slice(), &wrong).is_err());
    }

    #[test]
    fn predictions_round_trip() {
        let rows = vec![PredictionRow { encounter_id: 1, hour: 0, label: 0, probability: 0.25, route: Route::Nonstat }];
        let mut buf = Vec::new();
        write_predictions_csv(&rows, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "encounter_id,hour,label,probability,route\n1,0,0,0.25,nonstat\n");
        assert_eq!(read_predictions_csv(buf.as_slice()).unwrap(), rows);
    }
}

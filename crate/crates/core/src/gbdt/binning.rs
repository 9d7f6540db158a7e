//! Quantile binning with a dedicated missing bin.
//!
//! A feature with `k` edges has `k + 1` value bins, numbered `0..=k`, and a
//! missing bin numbered `k + 1`. A value `v` falls in bin `#{edges <= v}`,
//! so a split "bin <= b" is the same as "v < edges[b]".

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::GbdtError;
use crate::frame::FeatureFrame;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct BinMapper<T> {
    pub names: Vec<String>,
    /// Strictly increasing edges per feature.
    pub edges: Vec<Vec<T>>,
}

impl<T: Scalar> BinMapper<T> {
    pub fn n_features(&self) -> usize {
        self.edges.len()
    }

    pub fn n_value_bins(&self, f: usize) -> usize {
        self.edges[f].len() + 1
    }

    pub fn missing_bin(&self, f: usize) -> u16 {
        self.n_value_bins(f) as u16
    }

    /// Value bins plus the missing bin.
    pub fn n_bins(&self, f: usize) -> usize {
        self.n_value_bins(f) + 1
    }

    pub fn bin_value(&self, f: usize, v: T) -> u16 {
        if v.is_missing() {
            self.missing_bin(f)
        } else {
            self.edges[f].partition_point(|e| *e <= v) as u16
        }
    }

    /// Bins a frame with these frozen edges. Columns are matched by name.
    pub fn apply(&self, frame: &FeatureFrame<T>) -> Result<BinnedMatrix<T>, GbdtError> {
        let cols = frame.resolve(&self.names)?;
        let bins = cols
            .par_iter()
            .enumerate()
            .map(|(f, col)| col.iter().map(|&v| self.bin_value(f, v)).collect())
            .collect();
        Ok(BinnedMatrix {
            mapper: self.clone(),
            bins,
            n_rows: frame.n_rows(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct BinnedMatrix<T> {
    pub mapper: BinMapper<T>,
    /// Column-major bin indices.
    pub bins: Vec<Vec<u16>>,
    pub n_rows: usize,
}

impl<T: Scalar> BinnedMatrix<T> {
    pub fn n_features(&self) -> usize {
        self.bins.len()
    }

    pub fn names(&self) -> &[String] {
        &self.mapper.names
    }

    pub fn take_rows(&self, rows: &[usize]) -> Self {
        Self {
            mapper: self.mapper.clone(),
            bins: self.bins.iter().map(|c| rows.iter().map(|&r| c[r]).collect()).collect(),
            n_rows: rows.len(),
        }
    }
}

/// Edges at empirical quantiles of the observed values. With at most
/// `max_bins` distinct values, edges sit at midpoints between neighbours so
/// every distinct value gets its own bin.
pub fn feature_edges<T: Scalar>(values: &[T], max_bins: usize) -> Vec<T> {
    let mut v: Vec<T> = values.iter().copied().filter(|x| !x.is_missing()).collect();
    if v.is_empty() {
        return Vec::new();
    }
    v.sort_by(|a, b| a.partial_cmp(b).expect("observed values are ordered"));
    let mut distinct = v.clone();
    distinct.dedup();
    if distinct.len() <= max_bins {
        return distinct
            .windows(2)
            .map(|w| {
                let mid = w[0] + (w[1] - w[0]) / T::of(2.0);
                // Guard against a midpoint rounding onto the lower value.
                if mid > w[0] {
                    mid
                } else {
                    w[1]
                }
            })
            .collect();
    }
    let n = v.len();
    let mut edges: Vec<T> = Vec::with_capacity(max_bins - 1);
    for i in 1..max_bins {
        let q = v[((i * n) / max_bins).min(n - 1)];
        if q > v[0] && edges.last().is_none_or(|&l| q > l) {
            edges.push(q);
        }
    }
    edges
}

pub fn quantile_bin<T: Scalar>(frame: &FeatureFrame<T>, max_bins: usize) -> Result<BinnedMatrix<T>, GbdtError> {
    if frame.n_rows() == 0 {
        return Err(GbdtError::EmptyData);
    }
    if max_bins < 2 || max_bins > u16::MAX as usize - 1 {
        return Err(GbdtError::InvalidParams(format!("max_bins {max_bins} outside [2, 65534]")));
    }
    let edges = frame.columns().par_iter().map(|c| feature_edges(c, max_bins)).collect();
    let mapper = BinMapper {
        names: frame.names().to_vec(),
        edges,
    };
    mapper.apply(frame)
}

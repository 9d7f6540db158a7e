//! Dense column-major numeric frame shared by feature assembly and the learner.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum FrameError {
    #[error("duplicate column `{0}`")]
    DuplicateColumn(String),
    #[error("column `{name}` has {got} rows, frame has {expected}")]
    Length { name: String, expected: usize, got: usize },
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FeatureFrame<T> {
    names: Vec<String>,
    columns: Vec<Vec<T>>,
    n_rows: usize,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl<T: Scalar> PartialEq for FeatureFrame<T> {
    fn eq(&self, other: &Self) -> bool {
        self.names == other.names
            && self.n_rows == other.n_rows
            && self.columns.iter().zip(&other.columns).all(|(a, b)| {
                a.iter().zip(b).all(|(x, y)| x.to_f64().map(f64::to_bits) == y.to_f64().map(f64::to_bits))
            })
    }
}

impl<T: Scalar> FeatureFrame<T> {
    pub fn new(n_rows: usize) -> Self {
        Self {
            names: Vec::new(),
            columns: Vec::new(),
            n_rows,
            index: HashMap::new(),
        }
    }

    pub fn from_columns(n_rows: usize, cols: Vec<(String, Vec<T>)>) -> Result<Self, FrameError> {
        let mut f = Self::new(n_rows);
        for (n, c) in cols {
            f.push_column(n, c)?;
        }
        Ok(f)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_columns(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn columns(&self) -> &[Vec<T>] {
        &self.columns
    }

    pub fn push_column(&mut self, name: impl Into<String>, values: Vec<T>) -> Result<(), FrameError> {
        let name = name.into();
        if values.len() != self.n_rows {
            return Err(FrameError::Length {
                name,
                expected: self.n_rows,
                got: values.len(),
            });
        }
        if self.index_of(&name).is_some() {
            return Err(FrameError::DuplicateColumn(name));
        }
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.columns.push(values);
        Ok(())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        if self.index.len() == self.names.len() {
            self.index.get(name).copied()
        } else {
            // Index is not serialized; fall back to a scan after deserialization.
            self.names.iter().position(|n| n == name)
        }
    }

    pub fn column(&self, name: &str) -> Option<&[T]> {
        self.index_of(name).map(|i| self.columns[i].as_slice())
    }

    pub fn column_at(&self, i: usize) -> &[T] {
        &self.columns[i]
    }

    pub fn row(&self, r: usize) -> Vec<T> {
        self.columns.iter().map(|c| c[r]).collect()
    }

    /// Columns in the requested order.
    pub fn select(&self, names: &[String]) -> Result<Self, FrameError> {
        let mut out = Self::new(self.n_rows);
        for n in names {
            let c = self.column(n).ok_or_else(|| FrameError::UnknownColumn(n.clone()))?;
            out.push_column(n.clone(), c.to_vec())?;
        }
        Ok(out)
    }

    /// Rows in the requested order.
    pub fn take_rows(&self, rows: &[usize]) -> Self {
        let mut out = Self::new(rows.len());
        for (n, c) in self.names.iter().zip(&self.columns) {
            out.index.insert(n.clone(), out.names.len());
            out.names.push(n.clone());
            out.columns.push(rows.iter().map(|&r| c[r]).collect());
        }
        out
    }

    /// Borrows the named columns in order, for prediction against a fixed
    /// feature layout.
    pub fn resolve(&self, names: &[String]) -> Result<Vec<&[T]>, FrameError> {
        names
            .iter()
            .map(|n| self.column(n).ok_or_else(|| FrameError::UnknownColumn(n.clone())))
            .collect()
    }
}

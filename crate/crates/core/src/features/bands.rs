//! Banded scoring tables loaded from plain-text data files.
//!
//! One band per line: `criterion component lower upper points`, where the
//! bounds use interval notation, e.g. `(38 +inf)` or `[22 +inf)`. Lines
//! starting with `#` are comments. A criterion contributes the largest
//! points value among its matching bands, so alternative components (RR or
//! PaCO2) and disjoint bands (fever or hypothermia) share a criterion.

use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::clinical::{ClinicalRow, COMPONENTS, DERIVED_COMPONENTS};
use super::FeatureError;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub value: f64,
    pub inclusive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub criterion: String,
    pub component: String,
    pub lower: Bound,
    pub upper: Bound,
    pub points: u32,
}

impl Band {
    pub fn contains(&self, v: f64) -> bool {
        let above = if self.lower.inclusive { v >= self.lower.value } else { v > self.lower.value };
        let below = if self.upper.inclusive { v <= self.upper.value } else { v < self.upper.value };
        above && below
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandTable {
    pub name: String,
    pub bands: Vec<Band>,
    criteria: Vec<String>,
}

fn parse_bound(tok: &str, lower: bool) -> Option<Bound> {
    let (inclusive, body) = if lower {
        match tok.chars().next()? {
            '[' => (true, &tok[1..]),
            '(' => (false, &tok[1..]),
            _ => return None,
        }
    } else {
        match tok.chars().last()? {
            ']' => (true, &tok[..tok.len() - 1]),
            ')' => (false, &tok[..tok.len() - 1]),
            _ => return None,
        }
    };
    let value = match body {
        "-inf" => f64::NEG_INFINITY,
        "+inf" | "inf" => f64::INFINITY,
        b => b.parse().ok()?,
    };
    Some(Bound { value, inclusive })
}

impl BandTable {
    pub fn parse(name: &str, text: &str) -> Result<Self, FeatureError> {
        let mut bands = Vec::new();
        let mut criteria: Vec<String> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: &str| FeatureError::BandTable {
                table: name.to_string(),
                line: i + 1,
                message: msg.to_string(),
            };
            let tok: Vec<&str> = line.split_whitespace().collect();
            if tok.len() != 5 {
                return Err(err("expected 5 fields"));
            }
            let component = tok[1];
            if !COMPONENTS.contains(&component) && !DERIVED_COMPONENTS.contains(&component) {
                return Err(err(&format!("unknown component `{component}`")));
            }
            let lower = parse_bound(tok[2], true).ok_or_else(|| err("bad lower bound"))?;
            let upper = parse_bound(tok[3], false).ok_or_else(|| err("bad upper bound"))?;
            if !(lower.value <= upper.value) {
                return Err(err("lower bound above upper bound"));
            }
            let points: u32 = tok[4].parse().map_err(|_| err("bad points"))?;
            if !criteria.iter().any(|c| c == tok[0]) {
                criteria.push(tok[0].to_string());
            }
            bands.push(Band {
                criterion: tok[0].to_string(),
                component: component.to_string(),
                lower,
                upper,
                points,
            });
        }
        Ok(Self {
            name: name.to_string(),
            bands,
            criteria,
        })
    }

    pub fn criteria(&self) -> &[String] {
        &self.criteria
    }

    /// Highest attainable score.
    pub fn max_score(&self) -> u32 {
        self.criteria
            .iter()
            .map(|c| self.bands.iter().filter(|b| &b.criterion == c).map(|b| b.points).max().unwrap_or(0))
            .sum()
    }

    /// Points for one criterion; missing components match nothing.
    pub fn criterion_points<T: Scalar>(&self, criterion: &str, row: &ClinicalRow<T>) -> u32 {
        self.bands
            .iter()
            .filter(|b| b.criterion == criterion)
            .filter(|b| row.get(&b.component).is_some_and(|v| b.contains(v.as_f64())))
            .map(|b| b.points)
            .max()
            .unwrap_or(0)
    }

    pub fn score<T: Scalar>(&self, row: &ClinicalRow<T>) -> u32 {
        self.criteria.iter().map(|c| self.criterion_points(c, row)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandTables {
    pub sirs: BandTable,
    pub qsofa: BandTable,
    pub mews: BandTable,
    pub sofa: BandTable,
}

const SIRS: &str = include_str!("../../data/bands/sirs.bands");
const QSOFA: &str = include_str!("../../data/bands/qsofa.bands");
const MEWS: &str = include_str!("../../data/bands/mews.bands");
const SOFA: &str = include_str!("../../data/bands/sofa.bands");

impl BandTables {
    /// Tables shipped with the crate.
    pub fn builtin() -> &'static BandTables {
        static TABLES: OnceLock<BandTables> = OnceLock::new();
        TABLES.get_or_init(|| BandTables {
            sirs: BandTable::parse("sirs", SIRS).expect("shipped sirs table"),
            qsofa: BandTable::parse("qsofa", QSOFA).expect("shipped qsofa table"),
            mews: BandTable::parse("mews", MEWS).expect("shipped mews table"),
            sofa: BandTable::parse("sofa", SOFA).expect("shipped sofa table"),
        })
    }

    /// Reads `sirs.bands`, `qsofa.bands`, `mews.bands` and `sofa.bands` from
    /// a directory.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, FeatureError> {
        let read = |name: &str| -> Result<BandTable, FeatureError> {
            let path = dir.as_ref().join(format!("{name}.bands"));
            let text = std::fs::read_to_string(&path).map_err(|e| FeatureError::Io(format!("{}: {e}", path.display())))?;
            BandTable::parse(name, &text)
        };
        Ok(Self {
            sirs: read("sirs")?,
            qsofa: read("qsofa")?,
            mews: read("mews")?,
            sofa: read("sofa")?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_tables_parse_with_expected_ranges() {
        let t = BandTables::builtin();
        assert_eq!(t.sirs.max_score(), 4);
        assert_eq!(t.qsofa.max_score(), 3);
        assert_eq!(t.sofa.max_score(), 4 + 4 + 1 + 4 + 4);
        assert_eq!(t.mews.max_score(), 3 + 3 + 3 + 2);
    }

    #[test]
    fn interval_notation() {
        let b = BandTable::parse("t", "c heart_rate [22 +inf) 1\nc heart_rate (-inf 10] 2").unwrap();
        let inc = &b.bands[0];
        assert!(inc.contains(22.0) && !inc.contains(21.99));
        assert!(b.bands[1].contains(10.0) && !b.bands[1].contains(10.01));
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(BandTable::parse("t", "c heart_rate 22 +inf) 1").is_err());
        assert!(BandTable::parse("t", "c pulse [22 +inf) 1").is_err());
        assert!(BandTable::parse("t", "c heart_rate [22 +inf)").is_err());
        assert!(BandTable::parse("t", "c heart_rate [30 20) 1").is_err());
    }
}

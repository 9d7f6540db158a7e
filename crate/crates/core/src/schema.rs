//! Column schema: names, roles, units and plausibility ranges.
//!
//! The schema is configuration, not code. [`FeatureSchema::default_schema`]
//! loads the bundled `data/default_schema.toml`; any other file in the same
//! format can be loaded with [`FeatureSchema::load`].

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

const DEFAULT_SCHEMA: &str = include_str!("../data/default_schema.toml");

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),
    #[error("schema needs exactly one `{role}` column, found {found}")]
    RoleCardinality { role: Role, found: usize },
    #[error("column `{0}` is a vital or lab but has no unit")]
    MissingUnit(String),
    #[error("column `{column}` has an empty or inverted range [{min}, {max}]")]
    BadRange { column: String, min: f64, max: f64 },
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("unknown role `{0}`")]
    UnknownRole(String),
    #[error("schema file: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("schema file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Demographic,
    Vital,
    Lab,
    Derived,
    Mask,
    Label,
    Time,
    Id,
}

impl Role {
    /// Roles that carry a per-hour numeric value inside an encounter.
    pub fn is_value(self) -> bool {
        !matches!(self, Role::Label | Role::Time | Role::Id)
    }

    pub fn is_measurement(self) -> bool {
        matches!(self, Role::Vital | Role::Lab)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Demographic => "demographic",
            Role::Vital => "vital",
            Role::Lab => "lab",
            Role::Derived => "derived",
            Role::Mask => "mask",
            Role::Label => "label",
            Role::Time => "time",
            Role::Id => "id",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = SchemaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "demographic" => Role::Demographic,
            "vital" => Role::Vital,
            "lab" => Role::Lab,
            "derived" => Role::Derived,
            "mask" => Role::Mask,
            "label" => Role::Label,
            "time" => Role::Time,
            "id" => Role::Id,
            other => return Err(SchemaError::UnknownRole(other.to_string())),
        })
    }
}

/// Closed plausibility interval `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PhysioRange<T> {
    pub min: T,
    pub max: T,
}

impl<T: Scalar> PhysioRange<T> {
    pub fn contains(&self, v: T) -> bool {
        v >= self.min && v <= self.max
    }

    pub fn clamp(&self, v: T) -> T {
        v.max(self.min).min(self.max)
    }
}

/// Typical value and spread used by the synthetic generator. Reconstructed
/// reference values, not measured statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalProfile {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ColumnSpec<T> {
    pub name: String,
    pub role: Role,
    #[serde(default)]
    pub unit: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<PhysioRange<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normal: Option<NormalProfile>,
}

impl<T: Scalar> ColumnSpec<T> {
    pub fn new(name: impl Into<String>, role: Role) -> Self {
        Self {
            name: name.into(),
            role,
            unit: String::new(),
            range: None,
            normal: None,
        }
    }

    pub fn with_unit(mut self, unit: impl Into<String>) -> Self {
        self.unit = unit.into();
        self
    }

    pub fn with_range(mut self, min: T, max: T) -> Self {
        self.range = Some(PhysioRange { min, max });
        self
    }

    /// Name without a `min_` / `max_` hourly-aggregate prefix.
    pub fn base_name(&self) -> &str {
        base_name(&self.name)
    }
}

/// Strips a `min_` / `max_` prefix.
pub fn base_name(name: &str) -> &str {
    name.strip_prefix("min_")
        .or_else(|| name.strip_prefix("max_"))
        .unwrap_or(name)
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(bound = "T: Scalar")]
struct SchemaFile<T> {
    #[serde(rename = "column")]
    columns: Vec<ColumnSpec<T>>,
}

/// Ordered column list with role lookups.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSchema<T> {
    columns: Vec<ColumnSpec<T>>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> FeatureSchema<T> {
    pub fn new(columns: Vec<ColumnSpec<T>>) -> Result<Self, SchemaError> {
        let mut index = HashMap::with_capacity(columns.len());
        for (i, c) in columns.iter().enumerate() {
            if index.insert(c.name.clone(), i).is_some() {
                return Err(SchemaError::DuplicateColumn(c.name.clone()));
            }
            if c.role.is_measurement() && c.unit.trim().is_empty() {
                return Err(SchemaError::MissingUnit(c.name.clone()));
            }
            if let Some(r) = c.range {
                if !(r.min <= r.max) {
                    return Err(SchemaError::BadRange {
                        column: c.name.clone(),
                        min: r.min.as_f64(),
                        max: r.max.as_f64(),
                    });
                }
            }
        }
        for role in [Role::Label, Role::Id] {
            let found = columns.iter().filter(|c| c.role == role).count();
            if found != 1 {
                return Err(SchemaError::RoleCardinality { role, found });
            }
        }
        let found = columns.iter().filter(|c| c.role == Role::Time).count();
        if found > 1 {
            return Err(SchemaError::RoleCardinality {
                role: Role::Time,
                found,
            });
        }
        Ok(Self { columns, index })
    }

    pub fn from_toml_str(text: &str) -> Result<Self, SchemaError> {
        let file: SchemaFile<T> = toml::from_str(text)?;
        Self::new(file.columns)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SchemaError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| SchemaError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    /// Bundled reconstruction: 8 vitals and 29 labs, each with `min_`/`max_`
    /// hourly variants, plus age, sex and weight.
    pub fn default_schema() -> Self {
        Self::from_toml_str(DEFAULT_SCHEMA).expect("bundled schema is valid")
    }

    pub fn to_toml_string(&self) -> String {
        let file = SchemaFile {
            columns: self.columns.clone(),
        };
        toml::to_string(&file).expect("schema serializes")
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn columns(&self) -> &[ColumnSpec<T>] {
        &self.columns
    }

    pub fn column(&self, i: usize) -> &ColumnSpec<T> {
        &self.columns[i]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn require(&self, name: &str) -> Result<usize, SchemaError> {
        self.index_of(name)
            .ok_or_else(|| SchemaError::UnknownColumn(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    fn only(&self, role: Role) -> Option<usize> {
        self.columns.iter().position(|c| c.role == role)
    }

    pub fn id_column(&self) -> usize {
        self.only(Role::Id).expect("validated schema has an id column")
    }

    pub fn label_column(&self) -> usize {
        self.only(Role::Label)
            .expect("validated schema has a label column")
    }

    pub fn time_column(&self) -> Option<usize> {
        self.only(Role::Time)
    }

    pub fn indices_with_role(&self, role: Role) -> Vec<usize> {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.role == role)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn names_with_role(&self, role: Role) -> Vec<String> {
        self.columns
            .iter()
            .filter(|c| c.role == role)
            .map(|c| c.name.clone())
            .collect()
    }

    /// Vital and lab column names in schema order.
    pub fn measurement_names(&self) -> Vec<String> {
        self.columns
            .iter()
            .filter(|c| c.role.is_measurement())
            .map(|c| c.name.clone())
            .collect()
    }

    /// Appends a column. Fails if the name is taken.
    pub fn push(&mut self, spec: ColumnSpec<T>) -> Result<usize, SchemaError> {
        if self.index.contains_key(&spec.name) {
            return Err(SchemaError::DuplicateColumn(spec.name));
        }
        if spec.role.is_measurement() && spec.unit.trim().is_empty() {
            return Err(SchemaError::MissingUnit(spec.name));
        }
        if matches!(spec.role, Role::Label | Role::Id | Role::Time) {
            return Err(SchemaError::RoleCardinality {
                role: spec.role,
                found: 2,
            });
        }
        let i = self.columns.len();
        self.index.insert(spec.name.clone(), i);
        self.columns.push(spec);
        Ok(i)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> Vec<ColumnSpec<f64>> {
        vec![
            ColumnSpec::new("encounter_id", Role::Id),
            ColumnSpec::new("hour", Role::Time),
            ColumnSpec::new("heart_rate", Role::Vital)
                .with_unit("bpm")
                .with_range(20.0, 300.0),
            ColumnSpec::new("sepsis_label", Role::Label),
        ]
    }

    #[test]
    fn default_schema_has_expected_shape() {
        let s = FeatureSchema::<f64>::default_schema();
        assert_eq!(s.indices_with_role(Role::Vital).len(), 16);
        assert_eq!(s.indices_with_role(Role::Lab).len(), 58);
        assert_eq!(s.indices_with_role(Role::Demographic).len(), 3);
        assert_eq!(s.len(), 16 + 58 + 3 + 3);
        for c in s.columns().iter().filter(|c| c.role.is_measurement()) {
            assert!(c.range.is_some(), "{} lacks a range", c.name);
        }
    }

    #[test]
    fn rejects_duplicates_and_cardinality() {
        let mut cols = minimal();
        cols.push(ColumnSpec::new("heart_rate", Role::Vital).with_unit("bpm"));
        assert!(matches!(
            FeatureSchema::new(cols),
            Err(SchemaError::DuplicateColumn(_))
        ));

        let mut cols = minimal();
        cols.push(ColumnSpec::new("other_label", Role::Label));
        assert!(matches!(
            FeatureSchema::new(cols),
            Err(SchemaError::RoleCardinality { role: Role::Label, found: 2 })
        ));

        let mut cols = minimal();
        cols.retain(|c| c.role != Role::Id);
        assert!(FeatureSchema::new(cols).is_err());
    }

    #[test]
    fn measurement_requires_unit() {
        let mut cols = minimal();
        cols.push(ColumnSpec::new("wbc", Role::Lab));
        assert!(matches!(
            FeatureSchema::new(cols),
            Err(SchemaError::MissingUnit(_))
        ));
    }

    #[test]
    fn toml_round_trip() {
        let s = FeatureSchema::new(minimal()).unwrap();
        let text = s.to_toml_string();
        let back = FeatureSchema::<f64>::from_toml_str(&text).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn base_names() {
        assert_eq!(base_name("min_heart_rate"), "heart_rate");
        assert_eq!(base_name("max_wbc"), "wbc");
        assert_eq!(base_name("age"), "age");
    }
}

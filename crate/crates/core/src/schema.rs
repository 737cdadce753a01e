//! Feature metadata shared by every module.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SchemaError {
    #[error("schema must declare at least one feature")]
    Empty,
    #[error("duplicate feature name `{0}`")]
    DuplicateName(String),
}

/// Direction in which a feature value moves when the patient gets healthier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HealthyDirection {
    Decrease,
    Increase,
    None,
}

impl HealthyDirection {
    /// +1 / -1 / 0 multiplier applied to a positive step size.
    pub fn sign(self) -> f64 {
        match self {
            HealthyDirection::Decrease => -1.0,
            HealthyDirection::Increase => 1.0,
            HealthyDirection::None => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDef {
    pub name: String,
    pub unit: String,
    pub actionable: bool,
    pub healthy_direction: HealthyDirection,
}

impl FeatureDef {
    pub fn new(name: &str, unit: &str, actionable: bool, healthy_direction: HealthyDirection) -> Self {
        Self {
            name: name.to_string(),
            unit: unit.to_string(),
            actionable,
            healthy_direction,
        }
    }
}

/// Ordered feature list. Column order here is the column order of every
/// feature vector in the crate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<FeatureDef>", into = "Vec<FeatureDef>")]
pub struct FeatureSchema {
    features: Vec<FeatureDef>,
}

impl FeatureSchema {
    pub fn new(features: Vec<FeatureDef>) -> Result<Self, SchemaError> {
        if features.is_empty() {
            return Err(SchemaError::Empty);
        }
        let mut seen = HashSet::new();
        for f in &features {
            if !seen.insert(f.name.as_str()) {
                return Err(SchemaError::DuplicateName(f.name.clone()));
            }
        }
        Ok(Self { features })
    }

    /// The eight-column diabetes screening schema with the outcome column
    /// named `Outcome`.
    ///
    /// Age, pregnancies and the pedigree function cannot be changed by an
    /// intervention and are marked immutable.
    pub fn pima() -> Self {
        use HealthyDirection::*;
        Self::new(vec![
            FeatureDef::new("Pregnancies", "count", false, None),
            FeatureDef::new("Glucose", "mg/dL", true, Decrease),
            FeatureDef::new("BloodPressure", "mm Hg", true, Decrease),
            FeatureDef::new("SkinThickness", "mm", true, Decrease),
            FeatureDef::new("Insulin", "mu U/ml", true, Decrease),
            FeatureDef::new("BMI", "kg/m2", true, Decrease),
            FeatureDef::new("DiabetesPedigreeFunction", "score", false, None),
            FeatureDef::new("Age", "years", false, None),
        ])
        .expect("static schema is valid")
    }

    pub fn d(&self) -> usize {
        self.features.len()
    }

    pub fn features(&self) -> &[FeatureDef] {
        &self.features
    }

    pub fn feature(&self, index: usize) -> &FeatureDef {
        &self.features[index]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    /// Case-insensitive lookup.
    pub fn index_of_ignore_case(&self, name: &str) -> Option<usize> {
        self.features
            .iter()
            .position(|f| f.name.eq_ignore_ascii_case(name))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.features.iter().map(|f| f.name.as_str())
    }

    pub fn is_actionable(&self, index: usize) -> bool {
        self.features[index].actionable
    }
}

impl TryFrom<Vec<FeatureDef>> for FeatureSchema {
    type Error = SchemaError;

    fn try_from(value: Vec<FeatureDef>) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<FeatureSchema> for Vec<FeatureDef> {
    fn from(value: FeatureSchema) -> Self {
        value.features
    }
}

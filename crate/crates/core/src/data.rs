//! CSV ingestion and per-feature dataset summaries.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::FeatureSchema;
use crate::stats::{self, Histogram};

/// Name of the label column that follows the feature columns.
pub const LABEL_COLUMN: &str = "Outcome";

/// Bins used for the grey background distribution of every feature.
pub const HISTOGRAM_BINS: usize = 20;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot open {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("header mismatch: expected [{expected}], found [{found}]")]
    HeaderMismatch { expected: String, found: String },
    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    NonNumeric { row: usize, column: String, value: String },
    #[error("row {row}: label must be 0 or 1, found `{value}`")]
    BadLabel { row: usize, value: String },
    #[error("record {id}: expected {expected} values, found {found}")]
    Length { id: u64, expected: usize, found: usize },
    #[error("record {id}: value for `{column}` is not finite")]
    NonFinite { id: u64, column: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub id: u64,
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSummary {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub std: f64,
    pub histogram: Histogram,
}

/// Immutable table of records together with per-feature summaries.
#[derive(Debug, Clone)]
pub struct Dataset {
    schema: FeatureSchema,
    records: Vec<PatientRecord>,
    summaries: Vec<FeatureSummary>,
}

impl Dataset {
    pub fn new(schema: FeatureSchema, records: Vec<PatientRecord>) -> Result<Self, DataError> {
        for r in &records {
            validate_values(&schema, r.id, &r.values)?;
        }
        let summaries = (0..schema.d())
            .map(|j| {
                let col: Vec<f64> = records.iter().map(|r| r.values[j]).collect();
                summarize(&col)
            })
            .collect();
        Ok(Self {
            schema,
            records,
            summaries,
        })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn records(&self) -> &[PatientRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn summary(&self, feature: usize) -> &FeatureSummary {
        &self.summaries[feature]
    }

    pub fn summaries(&self) -> &[FeatureSummary] {
        &self.summaries
    }

    pub fn record(&self, id: u64) -> Option<&PatientRecord> {
        // Ids are row indices for loaded files; fall back to a scan otherwise.
        match self.records.get(id as usize) {
            Some(r) if r.id == id => Some(r),
            _ => self.records.iter().find(|r| r.id == id),
        }
    }

    pub fn column(&self, feature: usize) -> Vec<f64> {
        self.records.iter().map(|r| r.values[feature]).collect()
    }

    pub fn standardizer(&self) -> Standardizer {
        Standardizer {
            mean: self.summaries.iter().map(|s| s.mean).collect(),
            scale: self
                .summaries
                .iter()
                .map(|s| if s.std > 0.0 { s.std } else { 1.0 })
                .collect(),
        }
    }

    /// Reads a CSV whose header is the schema names followed by `Outcome`.
    /// Record ids are zero-based row indices.
    pub fn from_reader<R: Read>(reader: R, schema: FeatureSchema) -> Result<Self, DataError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let expected: Vec<String> = schema
            .names()
            .map(str::to_string)
            .chain(std::iter::once(LABEL_COLUMN.to_string()))
            .collect();
        if header != expected {
            return Err(DataError::HeaderMismatch {
                expected: expected.join(","),
                found: header.join(","),
            });
        }

        let d = schema.d();
        let mut records = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            // Data rows are numbered from 1, the header is row 0.
            let row_no = i + 1;
            let mut values = Vec::with_capacity(d);
            for j in 0..d {
                let cell = row.get(j).unwrap_or("");
                let v: f64 = cell.parse().map_err(|_| DataError::NonNumeric {
                    row: row_no,
                    column: expected[j].clone(),
                    value: cell.to_string(),
                })?;
                values.push(v);
            }
            let cell = row.get(d).unwrap_or("");
            let label = match cell.parse::<f64>() {
                Ok(v) if v == 0.0 => 0,
                Ok(v) if v == 1.0 => 1,
                _ => {
                    return Err(DataError::BadLabel {
                        row: row_no,
                        value: cell.to_string(),
                    })
                }
            };
            records.push(PatientRecord {
                id: i as u64,
                values,
                label: Some(label),
            });
        }
        Self::new(schema, records)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(writer);
        let header: Vec<&str> = self.schema.names().chain([LABEL_COLUMN]).collect();
        w.write_record(&header)?;
        for r in &self.records {
            let mut row: Vec<String> = r.values.iter().map(|v| format_number(*v)).collect();
            row.push(r.label.map(|l| l.to_string()).unwrap_or_default());
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| DataError::Io {
            path: "<writer>".into(),
            source: e,
        })?;
        Ok(())
    }
}

/// Loads a labelled CSV from disk.
pub fn load_dataset(path: impl AsRef<Path>, schema: FeatureSchema) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Dataset::from_reader(file, schema)
}

pub fn validate_values(schema: &FeatureSchema, id: u64, values: &[f64]) -> Result<(), DataError> {
    if values.len() != schema.d() {
        return Err(DataError::Length {
            id,
            expected: schema.d(),
            found: values.len(),
        });
    }
    if let Some(j) = values.iter().position(|v| !v.is_finite()) {
        return Err(DataError::NonFinite {
            id,
            column: schema.feature(j).name.clone(),
        });
    }
    Ok(())
}

fn summarize(col: &[f64]) -> FeatureSummary {
    let (min, max) = if col.is_empty() {
        (0.0, 0.0)
    } else {
        col.iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    };
    FeatureSummary {
        min,
        max,
        mean: stats::mean(col),
        std: stats::std_dev(col),
        histogram: Histogram::build(col, HISTOGRAM_BINS),
    }
}

fn format_number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Z-score transform fitted on a dataset. Zero-variance features get unit
/// scale so that noise in standardized units stays finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn identity(d: usize) -> Self {
        Self {
            mean: vec![0.0; d],
            scale: vec![1.0; d],
        }
    }

    pub fn d(&self) -> usize {
        self.mean.len()
    }

    pub fn to_std(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn from_std(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }
}
